#include "cli.hpp"

int main(int argc, char** argv) {
  return xmodal::cli::run(std::vector<std::string>(argv, argv + argc));
}
