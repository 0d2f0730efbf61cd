#include <doctest.h>

#include "conpro/rng.hpp"
#include "conpro/tensor.hpp"

using namespace conpro;

TEST_CASE("tensor shape and storage basics") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.ndim() == 2);
  t.at2(1, 2) = 5.0;
  CHECK(t[5] == 5.0);
  CHECK_THROWS(Tensor({2, 2}, {1.0, 2.0, 3.0}));
}

TEST_CASE("reshape preserves data and rejects bad sizes") {
  Rng rng(3);
  Tensor t = rng.normal_tensor({4, 6});
  Tensor r = t.reshaped({2, 12});
  for (int64_t i = 0; i < t.size(); ++i) CHECK(r[i] == t[i]);
  CHECK_THROWS(t.reshaped({5, 5}));
}

TEST_CASE("matmul agrees with a naive triple loop") {
  Rng rng(11);
  Tensor a = rng.normal_tensor({3, 5});
  Tensor b = rng.normal_tensor({5, 4});
  Tensor c = matmul_nn(a, b);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (int64_t k = 0; k < 5; ++k) acc += a.at2(i, k) * b.at2(k, j);
      CHECK(c.at2(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  CHECK_THROWS(matmul_nn(a, a));
}

TEST_CASE("transpose round-trips") {
  Rng rng(5);
  Tensor a = rng.normal_tensor({4, 7});
  Tensor tt = transpose2(transpose2(a));
  for (int64_t i = 0; i < a.size(); ++i) CHECK(tt[i] == a[i]);
}

TEST_CASE("fnv hash is deterministic and sensitive") {
  Rng rng(9);
  Tensor a = rng.normal_tensor({10});
  Tensor b = a;
  CHECK(fnv1a64(a) == fnv1a64(b));
  b[3] += 1e-15;
  CHECK(fnv1a64(a) != fnv1a64(b));
}

TEST_CASE("rng streams are deterministic per seed") {
  Rng a(42), b(42), c(43);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    double va = a.normal(), vb = b.normal(), vc = c.normal();
    all_equal = all_equal && (va == vb);
    any_diff = any_diff || (va != vc);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("mix_seed derives distinct child streams") {
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  CHECK(mix_seed(1, 2, 3) != mix_seed(1, 2, 4));
}
