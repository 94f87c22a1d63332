#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli.hpp"

int main(int argc, char** argv) {
  // stdout carries command output (CSV, reports); logs go to stderr.
  spdlog::set_default_logger(spdlog::stderr_color_mt("parkvision"));
  std::vector<std::string> args(argv + 1, argv + argc);
  return pv::cli::dispatch(args, std::cout, std::cerr);
}
