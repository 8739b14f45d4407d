#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ftl/errors.hpp"
#include "ftl/report.hpp"

namespace {

void add_common(CLI::App* cmd, ftl::RunConfig& cfg, std::string& fuse,
                std::string& engine, std::string& format, bool& no_db) {
  cmd->add_option("--model", cfg.model_path, "model file (.net)")->required();
  cmd->add_option("--hw", cfg.hw_path, "hardware config file (.hw)")->required();
  cmd->add_option("--fuse", fuse,
                  "fusion policy: auto, none, or chains like a,b;c,d");
  cmd->add_option("--engine", engine, "cluster or npu (gemm/conv on the NPU)");
  cmd->add_flag("--no-double-buffer", no_db, "simulate without double buffering");
  cmd->add_option("--format", format, "output format: table, csv or json");
  cmd->add_option("-o,--output", cfg.output_path, "write output to a file");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"fused-tiling planner and memory-hierarchy schedule simulator"};
  app.require_subcommand(1);

  ftl::RunConfig cfg;
  std::string fuse = "auto", engine = "cluster", format = "table";
  bool no_db = false;

  CLI::App* plan = app.add_subcommand("plan", "solve tiling for each group");
  CLI::App* cmp = app.add_subcommand(
      "compare", "simulate fused vs layer-per-layer execution");
  CLI::App* dump = app.add_subcommand(
      "dump-constraints", "print variables, bindings and constraints");
  for (CLI::App* cmd : {plan, cmp, dump})
    add_common(cmd, cfg, fuse, engine, format, no_db);

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.policy = ftl::parse_fusion_policy(fuse);
    cfg.engine = ftl::parse_engine(engine);
    cfg.format = ftl::parse_output_format(format);
    cfg.double_buffering = !no_db;
  } catch (const ftl::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  if (plan->parsed()) return ftl::cmd_plan(cfg, std::cout, std::cerr);
  if (cmp->parsed()) return ftl::cmd_compare(cfg, std::cout, std::cerr);
  return ftl::cmd_dump_constraints(cfg, std::cout, std::cerr);
}
