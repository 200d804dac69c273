#include "textcnn/cli.hpp"

int main(int argc, char** argv) { return textcnn::cli::run(argc, argv); }
