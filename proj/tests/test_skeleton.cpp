#include <doctest.h>

#include "hipart/skeleton.hpp"

using namespace hipart;

TEST_CASE("canonical 16-joint hierarchy shape") {
  SkeletonHierarchy h = build_hierarchy({16, 48, 96, {}});
  CHECK(h.j_sparse == 16);
  CHECK(h.j_dense == 48);
  CHECK(h.j_fine == 96);
  CHECK(h.r == 3);
  CHECK(h.parents_sparse == canonical_parents16());
  validate_hierarchy(h);
}

TEST_CASE("generation order is BFS with ascending siblings") {
  SkeletonHierarchy h = build_hierarchy({16, 48, 96, {}});
  // hand-walked queue: pop 0 -> push 1,4,7; pop 1 -> 2; pop 4 -> 5; pop 7 -> 8;
  // pop 2 -> 3,10,13; pop 5 -> 6; pop 8 -> 9; pop 10 -> 11; pop 13 -> 14; ...
  std::vector<int> expect = {0, 1, 4, 7, 2, 5, 8, 3, 10, 13, 6, 9, 11, 14, 12, 15};
  CHECK(h.gen_order == expect);
  CHECK(generation_order(h) == expect);
}

TEST_CASE("part maps partition each level") {
  SkeletonHierarchy h = build_hierarchy({16, 48, 96, {}});
  std::vector<int> seen_d(h.j_dense, 0), seen_f(h.j_fine, 0);
  for (int i = 0; i < h.j_sparse; ++i) {
    CHECK(static_cast<int>(h.part_map_sd[i].size()) == h.r);
    for (int dj : h.part_map_sd[i]) {
      ++seen_d[dj];
      CHECK(part_of(h, dj) == i);
    }
  }
  for (int j = 0; j < h.j_dense; ++j) {
    CHECK(static_cast<int>(h.part_map_df[j].size()) == 2);
    for (int fj : h.part_map_df[j]) ++seen_f[fj];
  }
  for (int c : seen_d) CHECK(c == 1);
  for (int c : seen_f) CHECK(c == 1);
}

TEST_CASE("non-16 sizes fall back to a chain") {
  SkeletonHierarchy h = build_hierarchy({4, 12, 24, {}});
  CHECK(h.r == 3);
  CHECK(h.parents_sparse == std::vector<int>{-1, 0, 1, 2});
  CHECK(h.gen_order == std::vector<int>{0, 1, 2, 3});
  validate_hierarchy(h);
}

TEST_CASE("build_hierarchy is deterministic") {
  SkeletonHierarchy a = build_hierarchy({16, 48, 96, {}});
  SkeletonHierarchy b = build_hierarchy({16, 48, 96, {}});
  CHECK(a == b);
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(build_hierarchy({16, 50, 100, {}}), ConfigError);   // 50 % 16 != 0
  CHECK_THROWS_AS(build_hierarchy({16, 48, 100, {}}), ConfigError);   // fine != 2 * dense
  CHECK_THROWS_AS(build_hierarchy({0, 0, 0, {}}), ConfigError);
  CHECK_THROWS_AS(build_hierarchy({4, 12, 24, {-1, 0, 0, 5}}), DomainError);  // bad parent
  CHECK_THROWS_AS(build_hierarchy({4, 12, 24, {-1, 0, -1, 2}}), DomainError); // two roots
}

TEST_CASE("validate_hierarchy catches a corrupted part map") {
  SkeletonHierarchy h = build_hierarchy({4, 12, 24, {}});
  h.part_map_sd[0][0] = h.part_map_sd[1][0];  // duplicate membership
  CHECK_THROWS_AS(validate_hierarchy(h), DomainError);
}
