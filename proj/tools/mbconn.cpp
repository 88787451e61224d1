#include <iostream>
#include <string>
#include <vector>

#include "mbconn/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mbconn::dispatch(args, std::cout, std::cerr);
}
