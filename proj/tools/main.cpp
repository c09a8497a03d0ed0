#include "app.hpp"

#include <mlgvar/error.hpp>

#include <iostream>

int main(int argc, char** argv) {
  mlgvar::app::RunConfig config;
  try {
    if (!mlgvar::app::parse_command_line(argc, argv, config, std::cout)) return 0;
  } catch (const mlgvar::Error& e) {
    return mlgvar::app::fail(config, std::string(mlgvar::to_string(e.code())), e.what(), std::cerr).exit_code;
  }
  const auto result = mlgvar::app::run(config, std::cerr);
  if (result.exit_code == 0)
    for (const auto& a : result.artifacts) std::cout << result.output_dir << "/" << a << "\n";
  return result.exit_code;
}
