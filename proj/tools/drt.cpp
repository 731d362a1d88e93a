#include "drt/cli.hpp"

int main(int argc, char** argv) {
  return drt::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
