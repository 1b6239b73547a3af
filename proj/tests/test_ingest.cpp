#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fmatch/em.hpp"
#include "fmatch/errors.hpp"
#include "fmatch/ingest.hpp"
#include "fmatch/rng.hpp"
#include "fmatch/util.hpp"

#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

using fmatch::DatasetPair;
using fmatch::Matrix;
using fmatch::NamedMatrix;
using fmatch::PartitionSpec;
using fmatch::Vector;

namespace {

// Unique scratch files per test binary run, removed on destruction.
struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content) {
    path = (std::filesystem::temp_directory_path() /
            ("fmatch_ingest_" + name))
               .string();
    fmatch::write_text_file(path, content);
  }
  ~TempFile() { std::remove(path.c_str()); }
};

DatasetPair square_pair() {
  DatasetPair pair;
  pair.partition.p_x = 1;
  pair.partition.p_y = 1;
  pair.partition.p_z = 1;
  pair.data_a = Matrix(4, 2);
  pair.data_a << 1, 10, 2, 11, 3, 14, 4, 13;
  pair.data_b = Matrix(3, 2);
  pair.data_b << 0, 5, 2, 9, 4, 7;
  return pair;
}

}  // namespace

TEST_CASE("csv matrix loading basics") {
  TempFile f("basic.csv", "a,b,c\n1,2,3\n4,5.5,-6e-1\n");
  const NamedMatrix m = fmatch::load_csv_matrix(f.path);
  CHECK(m.names == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(m.values.rows() == 2);
  REQUIRE(m.values.cols() == 3);
  CHECK(m.values(0, 0) == 1.0);
  CHECK(m.values(1, 1) == 5.5);
  CHECK(m.values(1, 2) == -0.6);
}

TEST_CASE("csv quoting, CRLF and surrounding blanks") {
  TempFile f("quoted.csv",
             "\"x,1\",\"say \"\"hi\"\"\",z\r\n1, 2 ,3\r\n4,5,6\r\n");
  const NamedMatrix m = fmatch::load_csv_matrix(f.path);
  CHECK(m.names[0] == "x,1");
  CHECK(m.names[1] == "say \"hi\"");
  CHECK(m.names[2] == "z");
  CHECK(m.values(0, 1) == 2.0);  // blanks around numerals are tolerated
  CHECK(m.values(1, 2) == 6.0);

  // Missing trailing newline still yields the last row.
  TempFile g("noeol.csv", "a,b\n1,2\n3,4");
  CHECK(fmatch::load_csv_matrix(g.path).values(1, 1) == 4.0);
}

TEST_CASE("csv structural errors") {
  TempFile ragged("ragged.csv", "a,b\n1,2\n3\n");
  CHECK_THROWS_AS(fmatch::load_csv_matrix(ragged.path),
                  fmatch::SchemaMismatchError);

  TempFile empty("empty.csv", "");
  CHECK_THROWS_AS(fmatch::load_csv_matrix(empty.path), fmatch::EmptyFileError);

  TempFile only_header("header.csv", "a,b\n");
  CHECK_THROWS_AS(fmatch::load_csv_matrix(only_header.path),
                  fmatch::EmptyFileError);

  TempFile dup("dup.csv", "a,a\n1,2\n");
  CHECK_THROWS_AS(fmatch::load_csv_matrix(dup.path),
                  fmatch::SchemaMismatchError);

  TempFile unterminated("unterm.csv", "a,b\n\"1,2\n");
  CHECK_THROWS_AS(fmatch::load_csv_matrix(unterminated.path),
                  fmatch::SchemaMismatchError);

  CHECK_THROWS_AS(fmatch::load_csv_matrix("/nonexistent/path.csv"),
                  fmatch::Error);
}

TEST_CASE("csv non-numeric cells carry their location") {
  TempFile f("cell.csv", "a,b\n1,2\n3,oops\n");
  try {
    fmatch::load_csv_matrix(f.path);
    FAIL("expected NonNumericCellError");
  } catch (const fmatch::NonNumericCellError& e) {
    CHECK(e.row == 3);  // 1-based, counting the header line
    CHECK(e.col == 2);
    CHECK(std::string(e.what()).find("oops") != std::string::npos);
  }

  // Empty cells are non-numeric too.
  TempFile g("gap.csv", "a,b\n1,\n");
  CHECK_THROWS_AS(fmatch::load_csv_matrix(g.path), fmatch::NonNumericCellError);
}

TEST_CASE("pair loading infers the shared block") {
  TempFile a("pair_a.csv", "age,income,score\n1,2,3\n4,5,6\n");
  TempFile b("pair_b.csv", "debt,age,income\n7,8,9\n10,11,12\n13,14,15\n");
  const DatasetPair pair = fmatch::load_pair(a.path, b.path);

  // Intersection keeps file A's order: age then income.
  CHECK(pair.shared_columns == std::vector<std::string>{"age", "income"});
  CHECK(pair.partition.p_x == 2);
  CHECK(pair.partition.p_y == 1);
  CHECK(pair.partition.p_z == 1);
  CHECK(pair.partition.labels ==
        std::vector<std::string>{"age", "income", "score", "debt"});

  // Columns are reordered to (X, Y) and (X, Z).
  CHECK(pair.data_a(0, 0) == 1.0);
  CHECK(pair.data_a(0, 2) == 3.0);
  CHECK(pair.data_b(0, 0) == 8.0);   // age moved to the front
  CHECK(pair.data_b(0, 1) == 9.0);   // then income
  CHECK(pair.data_b(0, 2) == 7.0);   // debt becomes Z
  CHECK(pair.data_b.rows() == 3);
}

TEST_CASE("pair loading with an explicit shared list") {
  TempFile a("expl_a.csv", "u,v,w\n1,2,3\n4,5,6\n");
  TempFile b("expl_b.csv", "u,v,t\n7,8,9\n1,2,3\n");

  const DatasetPair pair = fmatch::load_pair(a.path, b.path, {"u", "v"});
  CHECK(pair.partition.p_x == 2);
  CHECK(pair.partition.p_y == 1);
  CHECK(pair.partition.p_z == 1);

  // Excluding a column both files carry leaves it ambiguous.
  CHECK_THROWS_AS(fmatch::load_pair(a.path, b.path, {"v"}),
                  fmatch::SchemaMismatchError);

  CHECK_THROWS_AS(fmatch::load_pair(a.path, b.path, {"nope"}),
                  fmatch::MissingColumnError);

  TempFile c("disj.csv", "q,r\n1,2\n3,4\n");
  CHECK_THROWS_AS(fmatch::load_pair(a.path, c.path),
                  fmatch::MissingColumnError);
}

TEST_CASE("scatter formation centers per dataset") {
  const DatasetPair pair = square_pair();
  const fmatch::ObservedScatter sc = fmatch::to_scatter(pair);

  CHECK(sc.n_a == 4.0);
  CHECK(sc.n_b == 3.0);
  const Matrix ca = pair.data_a.rowwise() - pair.data_a.colwise().mean();
  CHECK((sc.scatter_a - ca.transpose() * ca).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix cb = pair.data_b.rowwise() - pair.data_b.colwise().mean();
  CHECK((sc.scatter_b - cb.transpose() * cb).cwiseAbs().maxCoeff() < 1e-12);

  // Two identical rows leave no scatter.
  DatasetPair flat = pair;
  flat.data_a = Matrix(2, 2);
  flat.data_a << 5, 7, 5, 7;
  CHECK(fmatch::to_scatter(flat).scatter_a.cwiseAbs().maxCoeff() == 0.0);

  DatasetPair tiny = pair;
  tiny.data_b = pair.data_b.topRows(1);
  CHECK_THROWS_AS(fmatch::to_scatter(tiny), std::invalid_argument);
}

TEST_CASE("scatter formation with pooled shared means") {
  const DatasetPair pair = square_pair();
  const fmatch::ObservedScatter sc =
      fmatch::to_scatter(pair, fmatch::Centering::PooledX);

  const double pooled =
      (pair.data_a.col(0).sum() + pair.data_b.col(0).sum()) / 7.0;
  Vector xa = pair.data_a.col(0).array() - pooled;
  const double mean_ya = pair.data_a.col(1).mean();
  Vector ya = pair.data_a.col(1).array() - mean_ya;
  CHECK(sc.scatter_a(0, 0) == doctest::Approx(xa.squaredNorm()).epsilon(1e-14));
  CHECK(sc.scatter_a(0, 1) == doctest::Approx(xa.dot(ya)).epsilon(1e-14));

  Vector xb = pair.data_b.col(0).array() - pooled;
  CHECK(sc.scatter_b(0, 0) == doctest::Approx(xb.squaredNorm()).epsilon(1e-14));
}

TEST_CASE("scatter formation with unit variances") {
  const DatasetPair pair = square_pair();
  const fmatch::ObservedScatter sc = fmatch::to_scatter(
      pair, fmatch::Centering::PerDataset, fmatch::Scaling::UnitVariance);
  // Every diagonal entry equals the row count after scaling.
  for (int j = 0; j < 2; ++j) {
    CHECK(sc.scatter_a(j, j) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(sc.scatter_b(j, j) == doctest::Approx(3.0).epsilon(1e-12));
  }

  DatasetPair constant = pair;
  constant.data_a.col(1).setConstant(2.5);
  CHECK_THROWS_AS(fmatch::to_scatter(constant, fmatch::Centering::PerDataset,
                                     fmatch::Scaling::UnitVariance),
                  fmatch::ZeroVarianceError);
}

TEST_CASE("model persistence round trips exactly") {
  fmatch::StoredModel stored;
  stored.model.partition.p_x = 2;
  stored.model.partition.p_y = 1;
  stored.model.partition.p_z = 1;
  stored.model.partition.labels = {"a", "b", "c", "d"};
  stored.model.loadings = Matrix(4, 2);
  stored.model.loadings << 0.1, -0.2, 1.0 / 3.0, 4e-17, 2.5, -0.75, 0.3,
      1e300;
  stored.model.uniquenesses = Vector(4);
  stored.model.uniquenesses << 0.1, 2.0 / 3.0, 3.25, 1e-12;
  stored.loglik = -123.456789012345678;
  stored.converged = true;
  stored.seed = 0xDEADBEEFCAFEBABEull;

  TempFile f("model.json", "placeholder");
  fmatch::save_model(stored, f.path);
  const fmatch::StoredModel back = fmatch::load_model(f.path);

  CHECK((back.model.loadings - stored.model.loadings).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK((back.model.uniquenesses - stored.model.uniquenesses)
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK(back.loglik == stored.loglik);
  CHECK(back.converged == stored.converged);
  CHECK(back.seed == stored.seed);
  CHECK(back.model.partition.labels == stored.model.partition.labels);

  // Saving identical content twice produces identical bytes.
  TempFile g("model2.json", "placeholder");
  fmatch::save_model(stored, g.path);
  CHECK(fmatch::read_text_file(f.path) == fmatch::read_text_file(g.path));
}

TEST_CASE("model loading rejects malformed files") {
  auto write_and_load = [](const std::string& name, const std::string& body) {
    TempFile f(name, body);
    return fmatch::load_model(f.path);
  };

  CHECK_THROWS_AS(write_and_load("bad1.json", "not json at all"),
                  fmatch::SchemaMismatchError);
  CHECK_THROWS_AS(write_and_load("bad2.json", "{\"version\": 1}"),
                  fmatch::SchemaMismatchError);
  CHECK_THROWS_AS(
      write_and_load(
          "bad3.json",
          "{\"version\": 7, \"q\": 1, \"partition\": {}, \"lambda\": [], "
          "\"psi\": [], \"loglik\": 0, \"converged\": true, \"seed\": 0}"),
      fmatch::VersionMismatchError);

  // Wrong lambda length.
  const std::string base =
      "{\"version\": 1, \"q\": 2, "
      "\"partition\": {\"p_X\": 1, \"p_Y\": 1, \"p_Z\": 1, \"labels\": []}, "
      "\"lambda\": [1, 2, 3], \"psi\": [1, 1, 1], "
      "\"loglik\": -1.5, \"converged\": false, \"seed\": 9}";
  CHECK_THROWS_AS(write_and_load("bad4.json", base),
                  fmatch::SchemaMismatchError);

  // Negative uniquenesses fail model validation on load.
  const std::string negative =
      "{\"version\": 1, \"q\": 1, "
      "\"partition\": {\"p_X\": 1, \"p_Y\": 1, \"p_Z\": 1, \"labels\": []}, "
      "\"lambda\": [1, 2, 3], \"psi\": [1, -1, 1], "
      "\"loglik\": -1.5, \"converged\": false, \"seed\": 9}";
  CHECK_THROWS_AS(write_and_load("bad5.json", negative),
                  fmatch::SchemaMismatchError);
}

TEST_CASE("covariance block files load and validate") {
  const std::string good =
      "{\"p_X\": 1, \"p_Y\": 1, \"p_Z\": 1, \"n_A\": 40, \"n_B\": 60,\n"
      " \"xx\": [[1.0]], \"xy\": [[0.5]], \"xz\": [[0.4]],\n"
      " \"yy\": [[2.0]], \"zz\": [[3.0]],\n"
      " \"labels\": [\"x\", \"y\", \"z\"]}";
  TempFile f("blocks.json", good);
  const fmatch::CovarianceBlocks cb = fmatch::load_blocks(f.path);
  CHECK(cb.n_a == 40);
  CHECK(cb.n_b == 60);
  CHECK(cb.blocks.xy(0, 0) == 0.5);
  CHECK(cb.blocks.partition.labels.size() == 3u);
  CHECK_FALSE(cb.blocks.yz.has_value());

  auto mutate = [&](const std::string& from, const std::string& to) {
    std::string body = good;
    body.replace(body.find(from), from.size(), to);
    return body;
  };

  TempFile miss("blocks_miss.json", mutate("\"zz\"", "\"ww\""));
  CHECK_THROWS_AS(fmatch::load_blocks(miss.path), fmatch::SchemaMismatchError);

  TempFile shape("blocks_shape.json", mutate("[[0.5]]", "[[0.5, 0.5]]"));
  CHECK_THROWS_AS(fmatch::load_blocks(shape.path), fmatch::SchemaMismatchError);

  TempFile count("blocks_count.json", mutate("\"n_A\": 40", "\"n_A\": 0"));
  CHECK_THROWS_AS(fmatch::load_blocks(count.path), fmatch::SchemaMismatchError);

  TempFile asym("blocks_asym.json",
                mutate("\"xx\": [[1.0]]",
                       "\"xx\": [[1.0, 0.2], [0.3, 1.0]]"));
  CHECK_THROWS_AS(fmatch::load_blocks(asym.path), fmatch::SchemaMismatchError);

  TempFile text("blocks_text.json", mutate("[[0.4]]", "[[\"x\"]]"));
  CHECK_THROWS_AS(fmatch::load_blocks(text.path), fmatch::SchemaMismatchError);
}

TEST_CASE("loaded pairs feed the estimator end to end") {
  // Small but real: write CSVs, load, form scatters, run a short fit.
  std::string csv_a = "x1,x2,y1\n";
  std::string csv_b = "x1,x2,z1\n";
  fmatch::Rng rng(404);  // any seed works, the assertions are structural
  for (int i = 0; i < 40; ++i) {
    const double f = rng.normal();
    csv_a += fmatch::format_double(f + 0.1 * rng.normal()) + "," +
             fmatch::format_double(2 * f + 0.1 * rng.normal()) + "," +
             fmatch::format_double(-f + 0.1 * rng.normal()) + "\n";
    const double g = rng.normal();
    csv_b += fmatch::format_double(g + 0.1 * rng.normal()) + "," +
             fmatch::format_double(2 * g + 0.1 * rng.normal()) + "," +
             fmatch::format_double(g + 0.1 * rng.normal()) + "\n";
  }
  TempFile a("e2e_a.csv", csv_a);
  TempFile b("e2e_b.csv", csv_b);

  const DatasetPair pair = fmatch::load_pair(a.path, b.path);
  const fmatch::ObservedScatter sc = fmatch::to_scatter(pair);
  fmatch::EMConfig cfg;
  cfg.restarts = 2;
  cfg.burn_iters = 5;
  cfg.max_iter = 200;
  const fmatch::FitReport report = fmatch::fit(sc, 1, cfg);
  CHECK(report.model.q() == 1);
  CHECK(report.trace_monotone());
}
