#include "commands.h"

int main(int argc, char** argv) { return mono3d::cli::Main(argc, argv); }
