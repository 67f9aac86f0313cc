#include <atomic>
#include <cstdlib>
#include <new>
#include <random>

#include <gtest/gtest.h>

#include "addonsim/lora/matrix.hpp"
#include "addonsim/lora/merge.hpp"

using namespace addonsim;
using namespace addonsim::lora;

namespace {

std::atomic<bool> g_counting{false};
std::atomic<std::size_t> g_bytes{0};
std::atomic<std::size_t> g_allocs{0};

}  // namespace

void* operator new(std::size_t n) {
  if (g_counting.load(std::memory_order_relaxed)) {
    g_bytes += n;
    ++g_allocs;
  }
  if (void* p = std::malloc(n ? n : 1)) return p;
  throw std::bad_alloc();
}

void operator delete(void* p) noexcept { std::free(p); }
void operator delete(void* p, std::size_t) noexcept { std::free(p); }

namespace {

Matrix mat(std::size_t r, std::size_t c, std::vector<float> v) { return Matrix(r, c, std::move(v)); }

// Dense reference product in double.
Matrix reference_merge(const Matrix& W, const Matrix& A, const Matrix& B, double scale) {
  Matrix out = W;
  for (std::size_t i = 0; i < W.rows(); ++i) {
    for (std::size_t j = 0; j < W.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < A.cols(); ++k) acc += static_cast<double>(A(i, k)) * B(k, j);
      out(i, j) = static_cast<float>(W(i, j) + scale * acc);
    }
  }
  return out;
}

}  // namespace

TEST(Merge, HandComputedTwoByTwo) {
  Layer layer{mat(2, 2, {1, 0, 0, 1}), {}};
  const LoRAAdapter a{"a", mat(2, 1, {1, 0}), mat(1, 2, {0, 2}), 1.0f};
  merge_in_place(layer, a);
  EXPECT_EQ(layer.W, mat(2, 2, {1, 2, 0, 1}));
  ASSERT_EQ(layer.patched_adapters.size(), 1u);
  EXPECT_EQ(layer.patched_adapters[0].id, "a");
}

TEST(Merge, HalfScaleHandComputed) {
  Layer layer{mat(2, 2, {1, 0, 0, 1}), {}};
  merge_in_place(layer, LoRAAdapter{"a", mat(2, 1, {1, 0}), mat(1, 2, {0, 2}), 0.5f});
  EXPECT_EQ(layer.W, mat(2, 2, {1, 1, 0, 1}));
}

TEST(Merge, ZeroAdapterLeavesWeightsButIsRecorded) {
  std::mt19937_64 rng(1);
  Layer layer{random_matrix(8, 6, rng), {}};
  const auto before = layer.W;
  merge_in_place(layer, LoRAAdapter{"z", Matrix(8, 2), random_matrix(2, 6, rng), 1.0f});
  EXPECT_EQ(layer.W, before);
  EXPECT_TRUE(layer.has("z"));
}

TEST(Merge, MatchesDenseReference) {
  std::mt19937_64 rng(2);
  Layer layer{random_matrix(33, 17, rng), {}};
  const LoRAAdapter a{"a", random_matrix(33, 5, rng), random_matrix(5, 17, rng), 0.75f};
  const auto want = reference_merge(layer.W, a.A, a.B, 0.75);
  merge_in_place(layer, a);
  EXPECT_LE(max_abs_diff(layer.W, want), 1e-6f);
}

TEST(Merge, DimensionMismatchAndDoubleMergeAreRejected) {
  std::mt19937_64 rng(3);
  Layer layer{random_matrix(4, 4, rng), {}};
  EXPECT_THROW(merge_in_place(layer, LoRAAdapter{"bad", random_matrix(5, 2, rng), random_matrix(2, 4, rng)}),
               ValidationError);
  EXPECT_THROW(merge_in_place(layer, LoRAAdapter{"bad", random_matrix(4, 2, rng), random_matrix(3, 4, rng)}),
               ValidationError);
  EXPECT_THROW(merge_in_place(layer, LoRAAdapter{"big", random_matrix(4, 5, rng), random_matrix(5, 4, rng)}),
               ValidationError);
  const LoRAAdapter a{"a", random_matrix(4, 2, rng), random_matrix(2, 4, rng)};
  merge_in_place(layer, a);
  const auto once = layer.W;
  EXPECT_THROW(merge_in_place(layer, a), ValidationError);
  EXPECT_EQ(layer.W, once);
}

TEST(Unmerge, RoundTripRestoresWeights) {
  std::mt19937_64 rng(4);
  Layer layer{random_matrix(64, 48, rng), {}};
  const auto original = layer.W;
  const LoRAAdapter a{"a", random_matrix(64, 16, rng), random_matrix(16, 48, rng)};
  merge_in_place(layer, a);
  unmerge(layer, a);
  EXPECT_LE(max_abs_diff(layer.W, original), 1e-5f);
  EXPECT_TRUE(layer.patched_adapters.empty());
}

TEST(Unmerge, NeverMergedIsRejected) {
  std::mt19937_64 rng(5);
  Layer layer{random_matrix(4, 4, rng), {}};
  EXPECT_THROW(unmerge(layer, LoRAAdapter{"x", random_matrix(4, 1, rng), random_matrix(1, 4, rng)}), ValidationError);
}

TEST(Unmerge, ReverseOrderRestoresWeights) {
  std::mt19937_64 rng(6);
  Layer layer{random_matrix(40, 40, rng), {}};
  const auto original = layer.W;
  const LoRAAdapter a{"a", random_matrix(40, 8, rng), random_matrix(8, 40, rng), 1.0f};
  const LoRAAdapter b{"b", random_matrix(40, 4, rng), random_matrix(4, 40, rng), 0.5f};
  merge_in_place(layer, a);
  merge_in_place(layer, b);
  unmerge(layer, b);
  unmerge(layer, a);
  EXPECT_LE(max_abs_diff(layer.W, original), 1e-5f);
}

TEST(Unmerge, UsesScaleRecordedAtMerge) {
  std::mt19937_64 rng(7);
  Layer layer{random_matrix(10, 10, rng), {}};
  const auto original = layer.W;
  LoRAAdapter a{"a", random_matrix(10, 3, rng), random_matrix(3, 10, rng), 0.25f};
  merge_in_place(layer, a);
  a.scale = 4.0f;
  unmerge(layer, a);
  EXPECT_LE(max_abs_diff(layer.W, original), 1e-5f);
}

TEST(CreateReplace, EquivalentToInPlaceAndOriginalUntouched) {
  std::mt19937_64 rng(8);
  Layer layer{random_matrix(50, 30, rng), {}};
  const LoRAAdapter a{"a", random_matrix(50, 6, rng), random_matrix(6, 30, rng), 0.8f};
  const auto replaced = create_and_replace_emulation(layer, a);
  EXPECT_TRUE(layer.patched_adapters.empty());
  Layer merged = layer;
  merge_in_place(merged, a);
  EXPECT_LE(max_abs_diff(replaced.effective_weight(), merged.W), 1e-6f);
  EXPECT_GE(replaced.memory_bytes(), layer.W.bytes() + a.A.bytes() + a.B.bytes());
}

TEST(Linearity, TwoMergesEqualOneStackedAdapter) {
  std::mt19937_64 rng(9);
  const std::size_t h1 = 30, h2 = 20, r1 = 3, r2 = 5;
  Layer seq{random_matrix(h1, h2, rng), {}};
  Layer stacked = seq;
  const LoRAAdapter a1{"a1", random_matrix(h1, r1, rng), random_matrix(r1, h2, rng)};
  const LoRAAdapter a2{"a2", random_matrix(h1, r2, rng), random_matrix(r2, h2, rng)};
  Matrix A(h1, r1 + r2);
  Matrix B(r1 + r2, h2);
  for (std::size_t i = 0; i < h1; ++i) {
    for (std::size_t k = 0; k < r1; ++k) A(i, k) = a1.A(i, k);
    for (std::size_t k = 0; k < r2; ++k) A(i, r1 + k) = a2.A(i, k);
  }
  for (std::size_t j = 0; j < h2; ++j) {
    for (std::size_t k = 0; k < r1; ++k) B(k, j) = a1.B(k, j);
    for (std::size_t k = 0; k < r2; ++k) B(r1 + k, j) = a2.B(k, j);
  }
  merge_in_place(seq, a1);
  merge_in_place(seq, a2);
  merge_in_place(stacked, LoRAAdapter{"both", A, B});
  EXPECT_LE(max_abs_diff(seq.W, stacked.W), 1e-5f);
}

TEST(Allocation, InPlaceMergeUsesOnlyARowBuffer) {
  std::mt19937_64 rng(10);
  const std::size_t h1 = 256, h2 = 192;
  Layer layer{random_matrix(h1, h2, rng), {}};
  layer.patched_adapters.reserve(4);
  const LoRAAdapter a{"adapter", random_matrix(h1, 16, rng), random_matrix(16, h2, rng)};
  g_bytes = 0;
  g_allocs = 0;
  g_counting = true;
  merge_in_place(layer, a);
  g_counting = false;
  EXPECT_LE(g_bytes.load(), h2 * sizeof(double) + 256);
  EXPECT_LT(g_bytes.load(), layer.W.bytes() / 8);

  g_bytes = 0;
  g_counting = true;
  const auto replaced = create_and_replace_emulation(Layer{layer.W, {}}, a);
  g_counting = false;
  EXPECT_GE(g_bytes.load(), layer.W.bytes() + a.A.bytes() + a.B.bytes());
}

TEST(Benchmark, InPlaceBeatsCreateAndReplace) {
  const auto b = bench_merge(2048, 2048, 64, 3);
  EXPECT_LT(b.inplace_ms, b.create_replace_ms);
  EXPECT_LT(b.inplace_bytes, b.create_replace_bytes);
}
