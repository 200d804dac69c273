#include <catch2/catch_amalgamated.hpp>

#include "textcnn/tensor.hpp"
#include "textcnn/tensor_ops.hpp"

using namespace textcnn;

namespace {

// Naive reference for reduce_max along the last feasible layouts used in
// the tests; walks every element, independent of the striding logic.
template <typename T>
std::vector<T> naive_rowwise_max(const Tensor<T>& t) {
  std::vector<T> out;
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    T best = t(i, 0);
    for (std::size_t j = 1; j < t.dim(1); ++j) best = std::max(best, t(i, j));
    out.push_back(best);
  }
  return out;
}

// Triple-loop matrix product oracle.
Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> out({a.dim(0), b.dim(1)}, 0.0);
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j)
      for (std::size_t k = 0; k < a.dim(1); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

}  // namespace

TEST_CASE("tensor construction and fill") {
  Tensor<double> z({2, 3}, 0.0);
  REQUIRE(z.size() == 6);
  for (std::size_t i = 0; i < z.size(); ++i) REQUIRE(z[i] == 0.0);

  Tensor<double> one({1}, 7.5);
  REQUIRE(one.size() == 1);
  REQUIRE(one[0] == 7.5);

  Tensor<float> canvas({69, 1014}, 0.0f);
  REQUIRE(canvas.size() == 69 * 1014);
  REQUIRE(canvas(68, 1013) == 0.0f);

  REQUIRE_THROWS(Tensor<double>({2, 0}));
  REQUIRE_THROWS(Tensor<double>(Shape{}));
  REQUIRE_THROWS(Tensor<double>({1, 2, 3, 4}));
}

TEST_CASE("row-major flattening round-trip") {
  Tensor<double> t({3, 5});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) t(i, j) = 10.0 * i + j;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) REQUIRE(t[i * 5 + j] == 10.0 * i + j);

  Tensor<double> r = t.reshaped({5, 3});
  REQUIRE(r.dim(0) == 5);
  for (std::size_t f = 0; f < t.size(); ++f) REQUIRE(r[f] == t[f]);
  REQUIRE_THROWS(t.reshaped({4, 4}));
}

TEST_CASE("rand_uniform range and determinism") {
  RngStream rng(42, 1);
  Tensor<double> t = rand_uniform<double>({16, 16}, -0.1, 0.1, rng);
  for (std::size_t i = 0; i < t.size(); ++i) {
    REQUIRE(t[i] >= -0.1);
    REQUIRE(t[i] < 0.1);
  }

  RngStream rng2(42, 1);
  Tensor<double> t2 = rand_uniform<double>({16, 16}, -0.1, 0.1, rng2);
  for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(t[i] == t2[i]);

  RngStream rng3(42, 1);
  Tensor<double> eps = rand_uniform<double>({64}, 0.0, 1e-12, rng3);
  for (std::size_t i = 0; i < eps.size(); ++i) {
    REQUIRE(eps[i] >= 0.0);
    REQUIRE(eps[i] < 1e-12);
  }

  RngStream bad(0);
  REQUIRE_THROWS(rand_uniform<double>({2}, 0.5, 0.5, bad));
  REQUIRE_THROWS(rand_uniform<double>({2}, 1.0, -1.0, bad));
}

TEST_CASE("rng substreams are independent and reproducible") {
  RngStream a(9, 0), b(9, 1), a2(9, 0);
  bool all_equal = true;
  for (int i = 0; i < 64; ++i) {
    std::uint64_t va = a.next_u64();
    REQUIRE(va == a2.next_u64());
    if (va != b.next_u64()) all_equal = false;
  }
  REQUIRE_FALSE(all_equal);
}

TEST_CASE("concat along an axis") {
  RngStream rng(3, 0);
  std::vector<Tensor<double>> vecs;
  for (int i = 0; i < 3; ++i) vecs.push_back(rand_uniform<double>({700}, -1, 1, rng));
  Tensor<double> joined = concat(vecs, 0);
  REQUIRE(joined.shape() == Shape{2100});

  Tensor<double> single = concat(std::vector<Tensor<double>>{vecs[0]}, 0);
  for (std::size_t i = 0; i < 700; ++i) REQUIRE(single[i] == vecs[0][i]);

  Tensor<double> a({2, 3}, 1.0), b({2, 5}, 2.0);
  Tensor<double> ab = concat(std::vector<Tensor<double>>{a, b}, 1);
  REQUIRE(ab.shape() == Shape{2, 8});
  REQUIRE(ab(1, 2) == 1.0);
  REQUIRE(ab(1, 3) == 2.0);

  Tensor<double> bad({3, 3}, 0.0);
  REQUIRE_THROWS(concat(std::vector<Tensor<double>>{a, bad}, 1));
}

TEST_CASE("concat then slice recovers inputs bit-exactly") {
  RngStream rng(11, 2);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    std::vector<Tensor<double>> parts;
    std::vector<std::size_t> widths = {2, 3, 1};
    for (std::size_t w : widths) {
      Shape s = {4, 5, 6};
      s[axis] = w;
      parts.push_back(rand_uniform<double>(s, -1, 1, rng));
    }
    Tensor<double> joined = concat(parts, axis);
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      Tensor<double> back = slice(joined, axis, off, widths[p]);
      REQUIRE(back.shape() == parts[p].shape());
      for (std::size_t i = 0; i < back.size(); ++i) REQUIRE(back[i] == parts[p][i]);
      off += widths[p];
    }
  }
}

TEST_CASE("reduce_max values, indices and tie handling") {
  auto v = Tensor<double>::from_data({3}, {3, 5, 7});
  auto r = reduce_max(v, 0);
  REQUIRE(r.values.shape() == Shape{1});
  REQUIRE(r.values[0] == 7.0);
  REQUIRE(r.arg_indices[0] == 2);

  auto ties = Tensor<double>::from_data({3}, {4, 4, 4});
  auto rt = reduce_max(ties, 0);
  REQUIRE(rt.values[0] == 4.0);
  REQUIRE(rt.arg_indices[0] == 0);

  auto m = Tensor<double>::from_data({2, 3}, {1, 9, 2, 8, 0, 8});
  auto rm = reduce_max(m, 1);
  REQUIRE(rm.values.shape() == Shape{2});
  REQUIRE(rm.values[0] == 9.0);
  REQUIRE(rm.values[1] == 8.0);
  REQUIRE(rm.arg_indices[0] == 1);
  REQUIRE(rm.arg_indices[1] == 0);

  REQUIRE_THROWS(reduce_max(m, 2));
}

TEST_CASE("reduce_max matches a naive loop oracle on random tensors") {
  RngStream rng(17, 5);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t r = 1 + rng.below(8), c = 1 + rng.below(8);
    Tensor<double> t = rand_uniform<double>({r, c}, -10, 10, rng);
    auto got = reduce_max(t, 1);
    auto want = naive_rowwise_max(t);
    for (std::size_t i = 0; i < r; ++i) REQUIRE(got.values[i] == want[i]);
  }
}

TEST_CASE("matmul identities and hand values") {
  Tensor<double> eye({3, 3}, 0.0);
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  RngStream rng(23, 0);
  Tensor<double> m = rand_uniform<double>({3, 3}, -2, 2, rng);
  Tensor<double> im = matmul(eye, m);
  for (std::size_t i = 0; i < m.size(); ++i) REQUIRE(im[i] == m[i]);

  auto a = Tensor<double>::from_data({1, 2}, {1, 2});
  auto b = Tensor<double>::from_data({2, 1}, {3, 4});
  REQUIRE(matmul(a, b)[0] == 11.0);

  Tensor<double> z({4, 3}, 0.0);
  Tensor<double> zm = matmul(z, m);
  for (std::size_t i = 0; i < zm.size(); ++i) REQUIRE(zm[i] == 0.0);

  REQUIRE_THROWS(matmul(a, m));
}

TEST_CASE("matmul agrees with the triple-loop oracle") {
  RngStream rng(29, 1);
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t r = 1 + rng.below(16), k = 1 + rng.below(16), c = 1 + rng.below(16);
    Tensor<double> a = rand_uniform<double>({r, k}, -3, 3, rng);
    Tensor<double> b = rand_uniform<double>({k, c}, -3, 3, rng);
    Tensor<double> got = matmul(a, b);
    Tensor<double> want = naive_matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i) {
      double denom = std::max(1e-12, std::abs(want[i]));
      REQUIRE(std::abs(got[i] - want[i]) / denom < 1e-10);
    }
  }
}
