#include <string>
#include <vector>

#include "ctxval/harness/cli.hpp"

int main(int argc, char** argv) {
  return ctxval::harness::run_cli(std::vector<std::string>(argv, argv + argc));
}
