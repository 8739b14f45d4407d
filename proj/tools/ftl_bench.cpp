// Times the OpenMP-parallel lattice search against a single thread and
// against the serial exhaustive reference on growing GEMM+GeLU problems.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "ftl/fusion.hpp"
#include "ftl/graph.hpp"
#include "ftl/hw.hpp"
#include "ftl/pipeline.hpp"
#include "ftl/solver.hpp"

namespace {

std::string model_text(ftl::u64 m, ftl::u64 k, ftl::u64 n) {
  char buf[1024];
  std::snprintf(buf, sizeof(buf),
                "version: 1\n"
                "tensors:\n"
                "  - {name: a, kind: input, elem_bytes: 1, axes: [[M, %llu], [K, %llu]]}\n"
                "  - {name: w, kind: weight, elem_bytes: 1, axes: [[K, %llu], [N, %llu]]}\n"
                "  - {name: x, kind: intermediate, elem_bytes: 1, axes: [[M, %llu], [N, %llu]]}\n"
                "  - {name: y, kind: output, elem_bytes: 1, axes: [[M, %llu], [N, %llu]]}\n"
                "nodes:\n"
                "  - {name: fc, kind: gemm, inputs: [a, w], outputs: [x]}\n"
                "  - {name: act, kind: gelu, inputs: [x], outputs: [y]}\n",
                (unsigned long long)m, (unsigned long long)k,
                (unsigned long long)k, (unsigned long long)n,
                (unsigned long long)m, (unsigned long long)n,
                (unsigned long long)m, (unsigned long long)n);
  return buf;
}

const char* kHw = R"(version: 1
name: bench
levels:
  - {name: L1, capacity: 262144, read_bw: 8, write_bw: 8}
  - {name: L2, capacity: 524288, read_bw: 8, write_bw: 8}
  - {name: L3, capacity: 8388608, read_bw: 2, write_bw: 2, is_offchip: true}
dma:
  setup_cycles: 100
  per_dim_overhead: 10
  pairs:
    - {src: L2, dst: L1, bytes_per_cycle: 8}
    - {src: L3, dst: L1, bytes_per_cycle: 2}
    - {src: L3, dst: L2, bytes_per_cycle: 2}
kernels:
  - {op: gemm, engine: cluster, macs_per_cycle: 2, requires_full_reduction: true}
  - {op: gemm, engine: npu, macs_per_cycle: 256, requires_full_reduction: true, simd_width: 4, vectorized_axis: n}
  - {op: conv2d, engine: cluster, macs_per_cycle: 2, requires_full_reduction: true}
  - {op: eltwise, engine: cluster, cycles_per_elem: 4}
cluster:
  num_cores: 8
  simd_width: 4
  min_tile_elems: 16
)";

double time_ms(const std::function<void()>& fn, int reps) {
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

} // namespace

int main() {
  ftl::HardwareConfig hw = ftl::load_hw_config(kHw, "bench");
  const int reps = 3;

  std::printf("%-18s %10s %12s %12s %12s\n", "instance", "lattice",
              "solve 1T ms", "solve NT ms", "brute ms");
  struct Case {
    ftl::u64 m, k, n;
  } cases[] = {{196, 768, 3072}, {256, 512, 2048}, {512, 256, 4096}};

  for (const Case& c : cases) {
    ftl::NetworkGraph graph = ftl::parse_network(model_text(c.m, c.k, c.n));
    auto groups = ftl::select_fusion_groups(graph, ftl::FusionPolicy::auto_policy());
    ftl::BoundProblem problem =
        ftl::bind_group(groups[0], graph, hw, ftl::Engine::npu);
    ftl::u64 lattice =
        ftl::lattice_size(problem, graph, hw, ftl::Engine::npu);

    ftl::u64 check1 = 0, checkN = 0, checkB = 0;
#ifdef _OPENMP
    int max_threads = omp_get_max_threads();
    omp_set_num_threads(1);
#endif
    double t1 = time_ms(
        [&] {
          check1 = ftl::solve(problem, graph, hw, ftl::Engine::npu).objective_cycles;
        },
        reps);
#ifdef _OPENMP
    omp_set_num_threads(max_threads);
#endif
    double tn = time_ms(
        [&] {
          checkN = ftl::solve(problem, graph, hw, ftl::Engine::npu).objective_cycles;
        },
        reps);
    double tb = -1;
    if (lattice <= 100000) {
      tb = time_ms(
          [&] {
            checkB = ftl::brute_force_solve(problem, graph, hw, ftl::Engine::npu)
                         .objective_cycles;
          },
          reps);
    }

    char name[64];
    std::snprintf(name, sizeof(name), "%llux%llux%llu", (unsigned long long)c.m,
                  (unsigned long long)c.k, (unsigned long long)c.n);
    std::printf("%-18s %10llu %12.2f %12.2f %12.2f\n", name,
                (unsigned long long)lattice, t1, tn, tb);
    if (check1 != checkN || (tb >= 0 && check1 != checkB)) {
      std::printf("MISMATCH: serial/parallel/brute objectives disagree\n");
      return 1;
    }
  }
  return 0;
}
