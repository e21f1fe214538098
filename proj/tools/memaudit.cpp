#include <exception>
#include <iostream>

#include "memaudit/commands.hpp"

int main(int argc, char** argv) {
  try {
    return memaudit::run_cli(argc, argv, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
