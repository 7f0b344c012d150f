#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stlsgd/errors.hpp"
#include "stlsgd/experiment.hpp"

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

// Stems repeat when sweeping variants of one file; suffix the later ones so
// every trace lands in its own file.
void dedupe_names(std::vector<stlsgd::SweepItem>& items) {
  std::map<std::string, int> seen;
  for (auto& item : items) {
    int n = ++seen[item.config.name];
    if (n > 1) item.config.name += "-" + std::to_string(n);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed local-SGD experiment runner"};
  std::vector<std::string> config_paths;
  std::string out_dir = "out";
  std::optional<std::int64_t> seed_override;
  bool quiet = false;
  app.add_option("--config", config_paths, "Experiment config file (repeatable)")
      ->required()
      ->expected(-1);
  app.add_option("--out", out_dir, "Output directory for traces and the summary");
  app.add_option("--seed", seed_override, "Seed override applied to every config");
  app.add_flag("--quiet", quiet, "Suppress progress output");
  CLI11_PARSE(app, argc, argv);

  std::vector<stlsgd::SweepItem> items;
  std::vector<std::size_t> pending;  // indices into items awaiting a run
  std::vector<stlsgd::ExperimentConfig> to_run;
  for (const auto& path : config_paths) {
    stlsgd::SweepItem item;
    try {
      item.config = stlsgd::load_config(path);
      if (seed_override) item.config.seed = static_cast<std::uint64_t>(*seed_override);
      pending.push_back(items.size());
      items.push_back(std::move(item));
    } catch (const std::exception& e) {
      item.config.name = fs::path(path).stem().string();
      item.error = e.what();
      item.error_code = 2;
      items.push_back(std::move(item));
    }
  }
  dedupe_names(items);
  for (auto idx : pending) to_run.push_back(items[idx].config);

  if (!to_run.empty()) {
    std::vector<stlsgd::SweepItem> ran;
    try {
      ran = stlsgd::sweep(to_run);
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 2;
    }
    for (std::size_t i = 0; i < ran.size(); ++i) {
      ran[i].config = std::move(items[pending[i]].config);
      items[pending[i]] = std::move(ran[i]);
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory " << out_dir << "\n";
    return 2;
  }

  int exit_code = 0;
  for (const auto& item : items) {
    if (item.result) {
      fs::path trace_path = fs::path(out_dir) / (item.config.name + "_trace.csv");
      try {
        write_file(trace_path, item.result->trace_csv);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
      }
      if (!quiet) {
        const auto& s = item.result->summary;
        std::cout << item.config.name << ": " << s.algorithm
                  << " comm_rounds=" << s.comm_rounds_total;
        if (s.comm_rounds_to_target) {
          std::cout << " to_target=" << *s.comm_rounds_to_target;
        }
        if (s.final_gap) {
          std::cout << " final_gap=" << stlsgd::format_double(*s.final_gap);
        }
        std::cout << " -> " << trace_path.string() << "\n";
      }
    } else {
      std::cerr << item.config.name << ": error: " << item.error << "\n";
      if (item.error_code == 2) {
        exit_code = 2;  // config problems take precedence over divergence
      } else if (exit_code == 0) {
        exit_code = item.error_code;
      }
    }
  }

  try {
    write_file(fs::path(out_dir) / "summary.csv", stlsgd::sweep_summary_csv(items));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (!quiet) {
    std::cout << "wrote " << (fs::path(out_dir) / "summary.csv").string() << "\n";
  }
  return exit_code;
}
