#include <string>
#include <vector>

#include "skel/cli.hpp"

int main(int argc, char** argv) {
  return skel::run_cli(std::vector<std::string>(argv, argv + argc));
}
