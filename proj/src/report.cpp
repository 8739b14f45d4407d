#include "ftl/report.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ftl/errors.hpp"

namespace ftl {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string pair_key(LevelPair p) {
  std::string s = to_string(p.upper) + "_" + to_string(p.lower);
  for (char& c : s) c = static_cast<char>(std::tolower(c));
  return s;
}

double round2(double x) { return std::round(x * 100.0) / 100.0; }

std::string fmt2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

const LevelPair kPairs[3] = {
    LevelPair::of(MemLevel::L2, MemLevel::L1),
    LevelPair::of(MemLevel::L3, MemLevel::L1),
    LevelPair::of(MemLevel::L3, MemLevel::L2),
};

std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += v[i];
  }
  return s;
}

ordered_json report_json(const SimReport& r) {
  ordered_json j;
  j["mode"] = r.mode;
  j["engine"] = to_string(r.engine);
  j["double_buffering"] = r.double_buffering;
  j["total_cycles"] = r.total_cycles;
  j["dma_transfers"] = r.dma_transfer_count;
  ordered_json bytes;
  for (LevelPair p : kPairs) bytes[pair_key(p)] = r.bytes_on(p);
  j["bytes_moved"] = bytes;
  j["peak_l1"] = r.peak_usage[0];
  j["peak_l2"] = r.peak_usage[1];
  j["peak_l3"] = r.peak_usage[2];
  j["dma_bound_cycles"] = r.dma_bound_cycles;
  j["compute_bound_cycles"] = r.compute_bound_cycles;
  ordered_json spills = ordered_json::array();
  for (const SpillEvent& s : r.spill_events) {
    ordered_json e;
    e["tensor"] = s.tensor;
    e["bytes"] = s.bytes;
    e["level"] = to_string(s.placed);
    spills.push_back(e);
  }
  j["spill_events"] = spills;
  ordered_json per_tensor;
  for (const auto& [name, b] : r.per_tensor_bytes) per_tensor[name] = b;
  j["bytes_per_tensor"] = per_tensor;
  return j;
}

ordered_json solution_json(const TilingSolution& s) {
  ordered_json j;
  j["group"] = s.group_label;
  j["nodes"] = s.nodes;
  ordered_json extents;
  for (size_t i = 0; i < s.extents.size(); ++i)
    extents[s.class_labels[i]] = s.extents[i];
  j["tile_extents"] = extents;
  ordered_json grid = ordered_json::array();
  for (const TileGridAxis& g : s.grid) {
    ordered_json axis;
    axis["axis"] = g.label;
    axis["extent"] = g.extent;
    axis["num_tiles"] = g.num_tiles;
    axis["last_extent"] = g.last_extent;
    grid.push_back(axis);
  }
  j["tile_grid"] = grid;
  ordered_json buffers = ordered_json::array();
  for (const BufferPlan::Entry& e : s.buffers.entries) {
    ordered_json b;
    b["tensor"] = e.tensor;
    b["bytes_per_tile"] = e.bytes_per_tile;
    b["copies"] = e.copies;
    b["offset"] = e.offset;
    buffers.push_back(b);
  }
  j["buffers"] = buffers;
  j["l1_bytes"] = s.buffers.total_bytes;
  j["relaxed"] = s.relaxed;
  j["objective_cycles"] = s.objective_cycles;
  return j;
}

void plan_table(std::ostream& os, const PlanResult& plan) {
  os << "plan: " << plan.groups.size() << " group(s), engine "
     << to_string(plan.engine) << "\n";
  for (const TilingSolution& s : plan.solutions) {
    os << "\ngroup " << s.group_label << "\n";
    os << "  tile grid:\n";
    for (const TileGridAxis& g : s.grid)
      os << "    " << g.label << ": extent " << g.extent << ", " << g.num_tiles
         << " tile(s), last " << g.last_extent << "\n";
    os << "  buffers (L1):\n";
    for (const BufferPlan::Entry& e : s.buffers.entries)
      os << "    " << e.tensor << ": " << e.bytes_per_tile << " B x" << e.copies
         << " @" << e.offset << "\n";
    os << "  l1 bytes: " << s.buffers.total_bytes << "\n";
    if (!s.relaxed.empty()) {
      os << "  relaxed:\n";
      for (const std::string& r : s.relaxed) os << "    " << r << "\n";
    }
    os << "  predicted cycles: " << s.objective_cycles << "\n";
  }
  for (const SpillEvent& sp : plan.residency.spills)
    os << "\nspill: " << sp.tensor << " (" << sp.bytes << " B) placed in "
       << to_string(sp.placed) << "\n";
}

void plan_csv(std::ostream& os, const PlanResult& plan) {
  os << "group,nodes,engine,tile_extents,l1_bytes,objective_cycles,relaxed\n";
  for (const TilingSolution& s : plan.solutions) {
    std::vector<std::string> extents;
    for (size_t i = 0; i < s.extents.size(); ++i)
      extents.push_back(s.class_labels[i] + "=" + std::to_string(s.extents[i]));
    os << s.group_label << "," << join(s.nodes, ";") << ","
       << to_string(plan.engine) << "," << join(extents, ";") << ","
       << s.buffers.total_bytes << "," << s.objective_cycles << ","
       << join(s.relaxed, ";") << "\n";
  }
}

void comparison_csv(std::ostream& os, const RunComparison& run) {
  os << "mode,engine,total_cycles,dma_transfers,bytes_l2_l1,bytes_l3_l1,"
        "bytes_l3_l2,peak_l1,peak_l2,spills\n";
  for (const SimReport* r : {&run.baseline, &run.fused}) {
    os << r->mode << "," << to_string(r->engine) << "," << r->total_cycles << ","
       << r->dma_transfer_count;
    for (LevelPair p : kPairs) os << "," << r->bytes_on(p);
    os << "," << r->peak_usage[0] << "," << r->peak_usage[1] << ","
       << r->spill_events.size() << "\n";
  }
}

void comparison_table(std::ostream& os, const RunComparison& run) {
  auto row = [&](const std::string& label, u64 b, u64 f) {
    os << "  " << label << ": baseline " << b << ", fused " << f << "\n";
  };
  os << "comparison (engine " << to_string(run.baseline.engine) << ", "
     << (run.baseline.double_buffering ? "double buffering" : "single buffering")
     << ")\n";
  row("total cycles", run.baseline.total_cycles, run.fused.total_cycles);
  row("dma transfers", run.baseline.dma_transfer_count,
      run.fused.dma_transfer_count);
  for (LevelPair p : kPairs)
    row("bytes " + to_string(p), run.baseline.bytes_on(p), run.fused.bytes_on(p));
  row("peak L1", run.baseline.peak_usage[0], run.fused.peak_usage[0]);
  row("peak L2", run.baseline.peak_usage[1], run.fused.peak_usage[1]);
  row("spill events", run.baseline.spill_events.size(),
      run.fused.spill_events.size());
  os << "  runtime reduction: " << fmt2(run.cmp.runtime_reduction_pct) << " %\n";
  os << "  transfer reduction: " << fmt2(run.cmp.transfer_reduction_pct) << " %\n";
  for (const SpillEvent& sp : run.baseline.spill_events)
    os << "  baseline spill: " << sp.tensor << " (" << sp.bytes << " B) -> "
       << to_string(sp.placed) << "\n";
  for (const SpillEvent& sp : run.fused.spill_events)
    os << "  fused spill: " << sp.tensor << " (" << sp.bytes << " B) -> "
       << to_string(sp.placed) << "\n";
}

int run_command(const RunConfig& cfg, std::ostream& err,
                const std::function<void(std::ostream&)>& body) {
  try {
    if (!cfg.output_path.empty()) {
      std::ofstream out(cfg.output_path, std::ios::binary);
      if (!out) throw ParseError("cannot write file '" + cfg.output_path + "'");
      body(out);
    } else {
      body(std::cout);
    }
    return 0;
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

} // namespace

FusionPolicy parse_fusion_policy(const std::string& spec) {
  if (spec == "auto") return FusionPolicy::auto_policy();
  if (spec == "none") return FusionPolicy::none_policy();
  FusionPolicy p;
  p.mode = FusionPolicy::Mode::explicit_chains;
  std::stringstream chains(spec);
  std::string chain;
  while (std::getline(chains, chain, ';')) {
    std::vector<std::string> nodes;
    std::stringstream ss(chain);
    std::string node;
    while (std::getline(ss, node, ',')) {
      if (!node.empty()) nodes.push_back(node);
    }
    if (!nodes.empty()) p.chains.push_back(std::move(nodes));
  }
  if (p.chains.empty()) throw ParseError("empty --fuse specification");
  return p;
}

OutputFormat parse_output_format(const std::string& spec) {
  if (spec == "table") return OutputFormat::table;
  if (spec == "csv") return OutputFormat::csv;
  if (spec == "json") return OutputFormat::json;
  throw ParseError("unknown output format '" + spec + "'");
}

Engine parse_engine(const std::string& spec) {
  if (spec == "cluster") return Engine::cluster;
  if (spec == "npu") return Engine::npu;
  throw ParseError("unknown engine '" + spec + "'");
}

std::string format_plan(const PlanResult& plan, OutputFormat fmt) {
  std::ostringstream os;
  if (fmt == OutputFormat::table) {
    plan_table(os, plan);
  } else if (fmt == OutputFormat::csv) {
    plan_csv(os, plan);
  } else {
    ordered_json j;
    j["schema_version"] = 1;
    j["engine"] = to_string(plan.engine);
    ordered_json groups = ordered_json::array();
    for (const TilingSolution& s : plan.solutions) groups.push_back(solution_json(s));
    j["groups"] = groups;
    ordered_json spills = ordered_json::array();
    for (const SpillEvent& s : plan.residency.spills) {
      ordered_json e;
      e["tensor"] = s.tensor;
      e["bytes"] = s.bytes;
      e["level"] = to_string(s.placed);
      spills.push_back(e);
    }
    j["spill_events"] = spills;
    os << j.dump(2) << "\n";
  }
  return os.str();
}

std::string format_comparison(const RunComparison& run, OutputFormat fmt) {
  std::ostringstream os;
  if (fmt == OutputFormat::table) {
    comparison_table(os, run);
  } else if (fmt == OutputFormat::csv) {
    comparison_csv(os, run);
  } else {
    ordered_json j;
    j["schema_version"] = 1;
    j["baseline"] = report_json(run.baseline);
    j["fused"] = report_json(run.fused);
    ordered_json cmp;
    cmp["runtime_reduction_pct"] = round2(run.cmp.runtime_reduction_pct);
    cmp["transfer_reduction_pct"] = round2(run.cmp.transfer_reduction_pct);
    ordered_json delta;
    for (LevelPair p : kPairs) {
      auto it = run.cmp.bytes_delta.find(p);
      delta[pair_key(p)] = it == run.cmp.bytes_delta.end() ? 0 : it->second;
    }
    cmp["bytes_delta"] = delta;
    j["comparison"] = cmp;
    os << j.dump(2) << "\n";
  }
  return os.str();
}

int cmd_plan(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  (void)out;
  return run_command(cfg, err, [&](std::ostream& os) {
    NetworkGraph graph = parse_network(read_file(cfg.model_path), cfg.model_path);
    HardwareConfig hw = load_hw_config(read_file(cfg.hw_path), cfg.hw_path);
    PlanResult plan = plan_network(graph, hw, cfg.policy, cfg.engine, "plan");
    os << format_plan(plan, cfg.format);
  });
}

int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  (void)out;
  return run_command(cfg, err, [&](std::ostream& os) {
    NetworkGraph graph = parse_network(read_file(cfg.model_path), cfg.model_path);
    HardwareConfig hw = load_hw_config(read_file(cfg.hw_path), cfg.hw_path);
    RunComparison run = run_comparison(graph, hw, cfg.policy, cfg.engine,
                                       cfg.double_buffering);
    os << format_comparison(run, cfg.format);
  });
}

int cmd_dump_constraints(const RunConfig& cfg, std::ostream& out,
                         std::ostream& err) {
  (void)out;
  return run_command(cfg, err, [&](std::ostream& os) {
    NetworkGraph graph = parse_network(read_file(cfg.model_path), cfg.model_path);
    HardwareConfig hw = load_hw_config(read_file(cfg.hw_path), cfg.hw_path);
    std::vector<FusionGroup> groups = select_fusion_groups(graph, cfg.policy);

    ordered_json jgroups = ordered_json::array();
    for (const FusionGroup& g : groups) {
      BoundProblem problem = bind_group(g, graph, hw, cfg.engine);
      GroupLayout layout = build_group_layout(problem, graph, hw, cfg.engine);

      // Binding equivalences: classes of the shared-tensor union with more
      // than one member.
      std::map<int, std::vector<std::string>> bind_classes;
      for (const DimVar& v : problem.vars)
        bind_classes[problem.binding.find(v.id)].push_back(v.label());

      if (cfg.format == OutputFormat::json) {
        ordered_json jg;
        jg["group"] = g.label();
        jg["nodes"] = g.nodes;
        ordered_json vars = ordered_json::array();
        for (const DimVar& v : problem.vars)
          vars.push_back(v.label() + " [1.." + std::to_string(v.full_extent) + "]");
        jg["variables"] = vars;
        ordered_json binds = ordered_json::array();
        for (const auto& [root, labels] : bind_classes)
          if (labels.size() > 1) binds.push_back(join(labels, " == "));
        jg["bindings"] = binds;
        ordered_json classes = ordered_json::array();
        for (const GroupLayout::VarClass& c : layout.classes) {
          ordered_json jc;
          jc["label"] = c.label;
          jc["extent"] = c.full;
          std::vector<std::string> members;
          for (int id : c.members)
            members.push_back(problem.var(id).label());
          jc["members"] = members;
          classes.push_back(jc);
        }
        jg["classes"] = classes;
        ordered_json cons = ordered_json::array();
        for (const Constraint& c : problem.constraints)
          cons.push_back(c.describe(problem.vars));
        jg["constraints"] = cons;
        jgroups.push_back(jg);
      } else {
        os << "group " << g.label() << "\n";
        os << "  variables:\n";
        for (const DimVar& v : problem.vars)
          os << "    " << v.label() << " in [1.." << v.full_extent << "]\n";
        bool any_bind = false;
        for (const auto& [root, labels] : bind_classes)
          if (labels.size() > 1) {
            if (!any_bind) os << "  bindings:\n";
            any_bind = true;
            os << "    " << join(labels, " == ") << "\n";
          }
        os << "  classes:\n";
        for (const GroupLayout::VarClass& c : layout.classes) {
          os << "    " << c.label << " (extent " << c.full;
          if (c.fixed) os << ", fixed " << *c.fixed;
          if (c.dep_on >= 0)
            os << ", = " << c.dep_scale << "*"
               << layout.classes[static_cast<size_t>(c.dep_on)].label
               << (c.dep_offset >= 0 ? "+" : "") << c.dep_offset;
          os << "): ";
          std::vector<std::string> members;
          for (int id : c.members) members.push_back(problem.var(id).label());
          os << join(members, ", ") << "\n";
        }
        os << "  constraints:\n";
        for (const Constraint& c : problem.constraints)
          os << "    " << c.describe(problem.vars) << "\n";
        os << "\n";
      }
    }
    if (cfg.format == OutputFormat::json) {
      ordered_json j;
      j["schema_version"] = 1;
      j["groups"] = jgroups;
      os << j.dump(2) << "\n";
    }
  });
}

} // namespace ftl
