// Runs every acceptance criterion and prints one pass/fail line each.
#include "linetension/acceptance.hpp"

#include <cstdlib>
#include <iostream>
#include <thread>

int main(int argc, char** argv) {
  linetension::AcceptanceOptions opt;
  opt.suite = argc > 1 ? argv[1] : "all";
  opt.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* t = std::getenv("LINETENSION_THREADS")) opt.threads = std::max(1, std::atoi(t));
  try {
    const auto rep = linetension::run_acceptance(opt);
    std::cout << rep.lines() << std::flush;
    return rep.all_pass() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
}
