#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "ftl/fusion.hpp"
#include "ftl/pipeline.hpp"

namespace ftl {

enum class OutputFormat { table, csv, json };

struct RunConfig {
  std::string model_path;
  std::string hw_path;
  FusionPolicy policy = FusionPolicy::auto_policy();
  Engine engine = Engine::cluster;
  bool double_buffering = true;
  OutputFormat format = OutputFormat::table;
  std::string output_path; // empty = stdout
};

/// Parse a --fuse value: "auto", "none", or chains of comma-separated node
/// names joined by ';'.
FusionPolicy parse_fusion_policy(const std::string& spec);
OutputFormat parse_output_format(const std::string& spec);
Engine parse_engine(const std::string& spec);

// Exit codes: 0 success, 1 I/O or parse error, 2 domain infeasibility.
int cmd_plan(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_dump_constraints(const RunConfig& cfg, std::ostream& out,
                         std::ostream& err);

// Renderers, exposed for tests.
std::string format_plan(const PlanResult& plan, OutputFormat fmt);
std::string format_comparison(const RunComparison& run, OutputFormat fmt);

} // namespace ftl
