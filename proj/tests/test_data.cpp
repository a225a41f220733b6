// Copyright 2026 The SupReMix Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "supremix/analysis.hpp"
#include "supremix/data.hpp"

using namespace supremix;

namespace {

std::string temp_file(const std::string& name, const std::string& body = "") {
  const auto p = std::filesystem::temp_directory_path() / ("supremix_test_" + name);
  if (!body.empty()) std::ofstream(p) << body;
  return p.string();
}

std::set<Label> distinct(const std::vector<Label>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("synthetic generation") {
  SyntheticSpec spec;
  const auto d = gen_synthetic(spec);
  CHECK(d.size() == 2000);
  CHECK(d.inputs.cols() == 16);
  CHECK(distinct(d.labels).size() == 41);
  CHECK(d.indices(Split::kTrain).size() == 1600);
  CHECK(d.indices(Split::kVal).size() == 200);
  CHECK(d.indices(Split::kTest).size() == 200);
  for (Label m : d.labels) {
    const double k = m * 40.0;
    CHECK(std::abs(k - std::round(k)) < 1e-12);
  }

  const auto again = gen_synthetic(spec);
  CHECK((again.inputs.array() == d.inputs.array()).all());
  CHECK(again.labels == d.labels);
  CHECK(again.split == d.split);

  spec.noise_sigma = 0.0;
  for (auto kind : {SyntheticKind::kHelix, SyntheticKind::kSmoothRandom}) {
    spec.kind = kind;
    const auto clean = gen_synthetic(spec);
    std::map<Label, Index> first;
    for (Index i = 0; i < clean.size(); ++i) {
      const auto [it, fresh] = first.emplace(clean.labels[static_cast<size_t>(i)], i);
      if (!fresh) CHECK((clean.inputs.row(i).array() == clean.inputs.row(it->second).array()).all());
    }
  }

  // The helix lives on a 3-dimensional subspace through an orthonormal map.
  spec.kind = SyntheticKind::kHelix;
  const auto clean = gen_synthetic(spec);
  for (Index i = 0; i < 20; ++i) {
    const double m = clean.labels[static_cast<size_t>(i)];
    CHECK(clean.inputs.row(i).norm() == doctest::Approx(std::sqrt(1.0 + m * m)));
  }

  spec.label_grid = 2;
  CHECK(distinct(gen_synthetic(spec).labels).size() == 2);

  SyntheticSpec bad;
  bad.n = 9;
  CHECK_THROWS_AS(gen_synthetic(bad), InvalidArgument);
  bad = {};
  bad.input_dim = 2;
  CHECK_THROWS_AS(gen_synthetic(bad), InvalidArgument);
  bad = {};
  bad.label_grid = 1;
  CHECK_THROWS_AS(gen_synthetic(bad), InvalidArgument);
}

TEST_CASE("csv loading") {
  const auto path = temp_file("small.csv", "x1,x2,y\n1,2,0\n3,4,1\n5,6,0.5\n");
  const auto d = load_csv(path, "y", std::nullopt, 3);
  CHECK(d.inputs.cols() == 2);
  CHECK(d.size() == 3);
  CHECK(d.inputs(1, 1) == 4.0);
  CHECK(d.labels[2] == 0.5);
  CHECK(d.feature_names == std::vector<std::string>{"x1", "x2"});

  try {
    load_csv(temp_file("nolabel.csv", "x1,x2,z\n1,2,0\n"), "y");
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("'y'") != std::string::npos);
  }
  try {
    load_csv(temp_file("bad.csv", "x1,y,split\n1,0,train\nabc,1,train\n"), "y");
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 3, column 1") != std::string::npos);
  }
  CHECK_THROWS_AS(load_csv(temp_file("absent.csv"), "y"), IoError);

  const auto g = load_csv(
      temp_file("grp.csv", "a,site,y,split\n1,north,0,train\n2,south,1,train\n3,north,2,test\n"),
      "y", std::string("site"));
  REQUIRE(g.groups);
  CHECK(*g.groups == std::vector<int>{0, 1, 0});
  CHECK(g.group_names == std::vector<std::string>{"north", "south"});
  CHECK(g.split[2] == Split::kTest);
  CHECK(g.inputs.cols() == 1);
}

TEST_CASE("csv round trip") {
  SyntheticSpec spec;
  spec.n = 50;
  spec.kind = SyntheticKind::kSmoothRandom;
  auto d = gen_synthetic(spec);
  d.groups = std::vector<int>(50, 0);
  for (Index i = 0; i < 50; i += 3) (*d.groups)[static_cast<size_t>(i)] = 1;
  d.group_names = {"a", "b"};
  const auto path = temp_file("roundtrip.csv");
  write_csv(d, path);
  const auto back = load_csv(path, "y", std::string("group"));
  CHECK((back.inputs - d.inputs).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(back.labels == d.labels);
  CHECK(back.split == d.split);
  for (size_t i = 0; i < d.labels.size(); ++i) {
    CHECK(back.group_names[static_cast<size_t>((*back.groups)[i])] ==
          d.group_names[static_cast<size_t>((*d.groups)[i])]);
  }
}

TEST_CASE("label permutation") {
  Dataset d;
  d.inputs = Matrix::Zero(4, 1);
  d.labels = {12, 48, 12, 48};
  d.split = {Split::kTrain, Split::kTrain, Split::kTest, Split::kTest};
  const auto p = permute_labels(d, 5);
  CHECK(p.labels == std::vector<Label>{48, 12, 48, 12});

  SyntheticSpec spec;
  spec.n = 400;
  const auto base = gen_synthetic(spec);
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto q = permute_labels(base, seed);
    CHECK(distinct(q.labels) == distinct(base.labels));
    std::map<Label, Index> count_a, count_b;
    for (Label m : base.labels) ++count_a[m];
    for (Label m : q.labels) ++count_b[m];
    std::multiset<Index> sizes_a, sizes_b;
    for (const auto& [m, c] : count_a) sizes_a.insert(c);
    for (const auto& [m, c] : count_b) sizes_b.insert(c);
    CHECK(sizes_a == sizes_b);
    std::map<Label, Label> map;
    bool consistent = true;
    for (size_t i = 0; i < base.labels.size(); ++i) {
      const auto [it, fresh] = map.emplace(base.labels[i], q.labels[i]);
      if (!fresh && it->second != q.labels[i]) consistent = false;
    }
    CHECK(consistent);
    std::vector<double> from, to;
    bool identity = true;
    for (const auto& [k, v] : map) {
      from.push_back(k);
      to.push_back(v);
      identity = identity && k == v;
    }
    CHECK_FALSE(identity);
    double rho = 0;
    spearman(from, to, &rho);
    total += rho;
  }
  CHECK(std::abs(total / 100.0) < 0.06);

  Dataset single = d;
  single.labels = {3, 3, 3, 3};
  CHECK_THROWS_AS(permute_labels(single, 0), InvalidArgument);
}

TEST_CASE("train subsampling") {
  SyntheticSpec spec;
  spec.n = 200;
  const auto d = gen_synthetic(spec);
  const auto full = subsample(d, 160, 1);
  CHECK(full.labels == d.labels);

  const auto small = subsample(d, 10, 1);
  CHECK(small.indices(Split::kTrain).size() == 10);
  CHECK(distinct(small.labels_of(Split::kTrain)).size() >= 2);
  CHECK(small.labels_of(Split::kTest) == d.labels_of(Split::kTest));
  CHECK(small.labels_of(Split::kVal) == d.labels_of(Split::kVal));
  const auto again = subsample(d, 10, 1);
  CHECK(again.labels == small.labels);
  CHECK((again.inputs.array() == small.inputs.array()).all());
  CHECK_THROWS_AS(subsample(d, 161, 1), InvalidArgument);

  Dataset two;
  two.inputs = Matrix::Zero(12, 1);
  two.labels.assign(12, 0.0);
  two.labels[11] = 1.0;
  two.split.assign(12, Split::kTrain);
  // Each attempt finds the lone second label with probability 1/6.
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    try {
      const auto picked = subsample(two, 2, seed).labels_of(Split::kTrain);
      CHECK(distinct(picked).size() == 2);
    } catch (const InvalidArgument&) {
      ++failures;
    }
  }
  CHECK(failures > 0);
  CHECK(failures < 30);
}

TEST_CASE("label-range exclusion") {
  SyntheticSpec spec;
  spec.n = 500;
  const auto d = gen_synthetic(spec);
  Index removed = 0;
  const std::vector<LabelInterval> band{{0.4, 0.6}};
  const auto f = filter_label_range(d, band, &removed);
  for (Label m : f.labels_of(Split::kTrain)) CHECK((m < 0.4 || m > 0.6));
  CHECK(f.labels_of(Split::kTest) == d.labels_of(Split::kTest));
  CHECK((f.inputs_of(Split::kTest).array() == d.inputs_of(Split::kTest).array()).all());
  CHECK(f.labels_of(Split::kVal) == d.labels_of(Split::kVal));

  Index brute = 0;
  for (size_t i = 0; i < d.labels.size(); ++i)
    if (d.split[i] == Split::kTrain && d.labels[i] >= 0.4 && d.labels[i] <= 0.6) ++brute;
  CHECK(removed == brute);
  CHECK(f.size() == d.size() - brute);

  const auto same = filter_label_range(d, {}, &removed);
  CHECK(removed == 0);
  CHECK(same.labels == d.labels);

  CHECK_THROWS_AS(filter_label_range(d, {{0.0, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(filter_label_range(d, {{0.6, 0.4}}), InvalidArgument);
}

TEST_CASE("numeric matrix csv") {
  const auto path = temp_file("matrix.csv", "a,b\n1,2.5\n\n-3,4e-1\n");
  std::vector<std::string> header;
  const Matrix m = load_matrix_csv(path, &header);
  CHECK(header == std::vector<std::string>{"a", "b"});
  REQUIRE(m.rows() == 2);
  CHECK(m(0, 1) == 2.5);
  CHECK(m(1, 0) == -3.0);
  CHECK(m(1, 1) == 0.4);
  CHECK_THROWS_AS(load_matrix_csv(temp_file("bad_matrix.csv", "a,b\n1\n")), ParseError);
  CHECK_THROWS_AS(load_matrix_csv(temp_file("text_matrix.csv", "a\nx\n")), ParseError);
  CHECK_THROWS_AS(load_matrix_csv("/nonexistent/m.csv"), IoError);
}
