#include <csignal>
#include <iostream>

#include "twostage/cli.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_interrupt(int) { g_stop.store(true); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_interrupt);
  std::vector<std::string> args(argv + 1, argv + argc);
  return twostage::cli::run(args, std::cout, std::cerr, &g_stop);
}
