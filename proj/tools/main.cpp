#include <exception>
#include <iostream>

#include "commands.hpp"
#include "ki67/error.hpp"

int main(int argc, char** argv) {
  try {
    return ki67::cli::run_cli(argc, argv);
  } catch (const ki67::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ki67::ErrorKind::Processing);
  }
}
