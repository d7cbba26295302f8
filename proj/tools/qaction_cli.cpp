#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "qaction/errors.hpp"
#include "qaction/experiment.hpp"
#include "qaction/parallel.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kNumerical = 2;

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw qa::InputError("cannot write '" + path.string() + "'");
  out << contents;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum action toolkit: propagators, global fits and flow equations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  int threads = 0;
  std::optional<std::uint64_t> seed;

  for (const auto& name : qa::command_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "Output directory");
    sub->add_option("--threads", threads, "Worker cap (1 runs the serial reference path)")->check(CLI::NonNegativeNumber);
    sub->add_option("--seed", seed, "Seed for sampled checks (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const auto config = qa::load_config(config_path);
    qa::validate_config(config);
    qa::RunContext ctx;
    ctx.seed = seed ? *seed : config.value("seed", std::uint64_t{0});
    qa::set_thread_limit(threads);
    ctx.exec = threads == 1 ? qa::Execution::Serial : qa::Execution::Parallel;

    const auto result = qa::run_command(command, config, ctx);

    std::filesystem::create_directories(out_dir);
    for (const auto& f : result.files) write_file(std::filesystem::path(out_dir) / f.name, f.contents);
    const std::string summary = result.summary.dump(2) + "\n";
    write_file(std::filesystem::path(out_dir) / (command + "_summary.json"), summary);

    for (const auto& line : result.report) std::cout << line << '\n';
    std::cout << summary;
    return result.passed ? kOk : kNumerical;
  } catch (const qa::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const qa::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
}
