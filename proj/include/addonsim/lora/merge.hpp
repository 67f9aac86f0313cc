#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "addonsim/core/error.hpp"
#include "addonsim/lora/matrix.hpp"

namespace addonsim::lora {

// Low-rank update W' = W + scale * A * B with A: H1 x r, B: r x H2.
struct LoRAAdapter {
  std::string id;
  Matrix A;
  Matrix B;
  float scale = 1.0f;

  std::size_t rank() const { return A.cols(); }
};

struct PatchedAdapter {
  std::string id;
  float scale = 1.0f;
};

struct Layer {
  Matrix W;
  std::vector<PatchedAdapter> patched_adapters;

  bool has(const std::string& id) const {
    return std::any_of(patched_adapters.begin(), patched_adapters.end(),
                       [&](const PatchedAdapter& p) { return p.id == id; });
  }
};

inline void validate(const LoRAAdapter& a) {
  if (a.rank() < 1) throw ValidationError("adapter " + a.id + ": rank must be >= 1");
  if (a.B.rows() != a.rank()) throw ValidationError("adapter " + a.id + ": A is H1 x r but B does not have r rows");
  if (a.rank() > std::min(a.A.rows(), a.B.cols())) {
    throw ValidationError("adapter " + a.id + ": rank exceeds min(H1, H2)");
  }
}

inline void check_fits(const Matrix& W, const LoRAAdapter& a) {
  validate(a);
  if (a.A.rows() != W.rows() || a.B.cols() != W.cols()) {
    throw ValidationError("adapter " + a.id + ": dimensions do not match layer " + std::to_string(W.rows()) + "x" +
                          std::to_string(W.cols()));
  }
}

namespace kernel {

// row_out[j] = sum_k A(i,k) * B(k,j), accumulated in double.
inline void low_rank_row(const Matrix& A, const Matrix& B, std::size_t i, std::vector<double>& row_out) {
  std::fill(row_out.begin(), row_out.end(), 0.0);
  const auto a_row = A.row(i);
  for (std::size_t k = 0; k < a_row.size(); ++k) {
    const double aik = a_row[k];
    if (aik == 0.0) continue;
    const auto b_row = B.row(k);
    for (std::size_t j = 0; j < b_row.size(); ++j) row_out[j] += aik * b_row[j];
  }
}

inline void apply_low_rank(Matrix& W, const Matrix& A, const Matrix& B, double scale) {
  std::vector<double> row(W.cols());
  for (std::size_t i = 0; i < W.rows(); ++i) {
    low_rank_row(A, B, i, row);
    auto w = W.row(i);
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = static_cast<float>(w[j] + scale * row[j]);
  }
}

}  // namespace kernel

// W += scale * A * B, one output row at a time; the only allocation is a
// single H2-length row buffer.
inline void merge_in_place(Layer& layer, const LoRAAdapter& adapter) {
  check_fits(layer.W, adapter);
  if (layer.has(adapter.id)) throw ValidationError("adapter " + adapter.id + " is already merged");
  kernel::apply_low_rank(layer.W, adapter.A, adapter.B, adapter.scale);
  layer.patched_adapters.push_back(PatchedAdapter{adapter.id, adapter.scale});
}

// Subtracts a previously merged adapter using the scale recorded at merge time.
inline void unmerge(Layer& layer, const LoRAAdapter& adapter) {
  auto it = std::find_if(layer.patched_adapters.begin(), layer.patched_adapters.end(),
                         [&](const PatchedAdapter& p) { return p.id == adapter.id; });
  if (it == layer.patched_adapters.end()) throw ValidationError("adapter " + adapter.id + " is not merged");
  check_fits(layer.W, adapter);
  kernel::apply_low_rank(layer.W, adapter.A, adapter.B, -static_cast<double>(it->scale));
  layer.patched_adapters.erase(it);
}

// Replacement layer that keeps its own copies of W, A and B.
struct LoRALayer {
  Matrix W;
  Matrix A;
  Matrix B;
  float scale = 1.0f;
  std::string adapter_id;

  Matrix effective_weight() const {
    Matrix out = W;
    kernel::apply_low_rank(out, A, B, scale);
    return out;
  }

  std::size_t memory_bytes() const { return W.bytes() + A.bytes() + B.bytes(); }
};

// Allocates a new layer wrapping copies of the base weight and adapter;
// `layer` is left untouched.
inline LoRALayer create_and_replace_emulation(const Layer& layer, const LoRAAdapter& adapter) {
  check_fits(layer.W, adapter);
  if (layer.has(adapter.id)) throw ValidationError("adapter " + adapter.id + " is already merged");
  return LoRALayer{layer.W, adapter.A, adapter.B, adapter.scale, adapter.id};
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, float lo = -1.0f,
                            float hi = 1.0f) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = static_cast<float>(lo + (hi - lo) * u);
  }
  return m;
}

struct MergeBenchmark {
  std::size_t h1 = 0;
  std::size_t h2 = 0;
  std::size_t rank = 0;
  double inplace_ms = 0.0;
  double create_replace_ms = 0.0;
  std::size_t inplace_bytes = 0;
  std::size_t create_replace_bytes = 0;
};

// Best-of-`repeats` wall time for an in-place merge versus building a
// replacement layer and materializing its effective weight.
inline MergeBenchmark bench_merge(std::size_t h1, std::size_t h2, std::size_t rank, int repeats = 3,
                                  std::uint64_t seed = 7) {
  detail::require(repeats >= 1, "bench_merge: repeats must be >= 1");
  std::mt19937_64 rng(seed);
  const Layer base{random_matrix(h1, h2, rng), {}};
  const LoRAAdapter adapter{"bench", random_matrix(h1, rank, rng), random_matrix(rank, h2, rng), 1.0f};
  using Clock = std::chrono::steady_clock;
  MergeBenchmark out{h1, h2, rank, 1e300, 1e300, 0, 0};
  for (int r = 0; r < repeats; ++r) {
    Layer layer = base;
    auto t0 = Clock::now();
    merge_in_place(layer, adapter);
    auto t1 = Clock::now();
    out.inplace_ms = std::min(out.inplace_ms, std::chrono::duration<double, std::milli>(t1 - t0).count());

    t0 = Clock::now();
    const auto replaced = create_and_replace_emulation(base, adapter);
    const auto effective = replaced.effective_weight();
    t1 = Clock::now();
    out.create_replace_ms = std::min(out.create_replace_ms, std::chrono::duration<double, std::milli>(t1 - t0).count());
    out.create_replace_bytes = replaced.memory_bytes() + effective.bytes();
  }
  out.inplace_bytes = base.W.bytes();
  return out;
}

}  // namespace addonsim::lora
