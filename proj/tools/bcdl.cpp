#include <bcdl/cli.hpp>

#include <iostream>

int
main(int argc, char** argv)
{
  return bcdl::cli_main(argc, argv, std::cout, std::cerr);
}
