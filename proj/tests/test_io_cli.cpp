#include "support.hpp"

#include <bcdl/cli.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

using namespace bcdl;
using bcdl::testing::scratch_dir;
using bcdl::testing::tiny_instance;

namespace
{
  struct CliRun
  {
    int code = 0;
    std::string out;
    std::string err;
  };

  CliRun
  run(std::vector<std::string> args)
  {
    args.insert(args.begin(), "bcdl");
    std::vector<const char*> argv;
    for (const auto& a : args)
      argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliRun r;
    r.code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out  = out.str();
    r.err  = err.str();
    return r;
  }

  std::string
  str(const fs::path& p)
  {
    return p.string();
  }

  /// Trained archive over a tiny synthetic set.
  fs::path
  tiny_archive(const fs::path& dir, std::uint64_t seed = 1)
  {
    auto inst = tiny_instance(10, 2, 2, 3, 50.0);
    ModelArchive a;
    a.posterior = train(inst.data, inst.cfg, SamplerConfig{3, 4, 1, seed});
    a.train_x   = inst.data.x;
    record_model_config(a.manifest, inst.cfg);
    save_model(dir, a);
    return dir;
  }
}

// CSV ------------------------------------------------------------------------

TEST(Csv, ParsesRowsAndScientificNotation)
{
  auto d = scratch_dir("csv_parse");
  write_text(d / "a.csv", "1,2,3\n\n1e3, -4.5 ,+0.25\r\n");
  Matrix m = read_csv(d / "a.csv");
  ASSERT_EQ(m.rows(), 2);
  ASSERT_EQ(m.cols(), 3);
  EXPECT_EQ(m(1, 0), 1000.0);
  EXPECT_EQ(m(1, 1), -4.5);
  EXPECT_EQ(m(1, 2), 0.25);
}

TEST(Csv, ErrorsNameRowAndColumn)
{
  auto d = scratch_dir("csv_errors");
  write_text(d / "bad.csv", "1,2\n3,abc\n");
  try
  {
    read_csv(d / "bad.csv");
    FAIL();
  }
  catch (const DataError& e)
  {
    EXPECT_NE(std::string(e.what()).find("row 2, column 2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("'abc'"), std::string::npos);
  }
  write_text(d / "ragged.csv", "1,2\n3\n");
  EXPECT_THROW(read_csv(d / "ragged.csv"), DataError);
  write_text(d / "empty.csv", "\n\n");
  EXPECT_THROW(read_csv(d / "empty.csv"), DataError);
  write_text(d / "nan.csv", "1,nan\n");
  EXPECT_THROW(read_csv(d / "nan.csv"), DataError);
  EXPECT_THROW(read_csv(d / "missing.csv"), DataError);
}

TEST(Csv, FormatRoundTripIsBitExact)
{
  RngStream rng(1);
  Matrix m(3, 4);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = rng.normal() * std::pow(10.0, static_cast<double>(i % 7) - 3.0);
  m(0, 0) = 0.1;
  m(2, 3) = -1e-300;
  auto d = scratch_dir("csv_round");
  write_csv(d / "m.csv", m);
  EXPECT_TRUE(read_csv(d / "m.csv") == m);
}

TEST(LoadDataset, TransposesAndChecksPairing)
{
  auto d = scratch_dir("load_dataset");
  write_text(d / "x.csv", "1,2,3\n4,5,6\n");
  write_text(d / "y.csv", "7\n8\n");
  Dataset data = load_dataset(d / "x.csv", d / "y.csv");
  EXPECT_EQ(data.n(), 2);
  EXPECT_EQ(data.m_x(), 3);
  EXPECT_EQ(data.m_y(), 1);
  EXPECT_EQ(data.x(2, 1), 6.0);
  write_text(d / "y3.csv", "7\n8\n9\n");
  write_text(d / "x3.csv", "1\n2\n3\n");
  try
  {
    load_dataset(d / "x3.csv", d / "y.csv");
    FAIL();
  }
  catch (const PairingMismatch& e)
  {
    EXPECT_EQ(e.x_rows(), 3u);
    EXPECT_EQ(e.y_rows(), 2u);
    EXPECT_NE(std::string(e.what()).find("PairingMismatch(3,2)"), std::string::npos);
  }
}

TEST(Standardizer, CentersAndScales)
{
  Matrix x(2, 4);
  x << 1, 2, 3, 4, 5, 5, 5, 5;
  Standardizer s = Standardizer::fit(x);
  Matrix z = s.apply(x);
  EXPECT_NEAR(z.row(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(z.row(0).squaredNorm() / 4.0, 1.0, 1e-14);
  EXPECT_EQ(s.scale(1), 1.0);
  EXPECT_TRUE((z.row(1).array() == 0.0).all());
}

TEST(Manifest, TextRoundTrip)
{
  RunManifest m;
  m.set("b", 0.1);
  m.set("a", std::string("x=y"));
  m.set("n", std::uint64_t{42});
  EXPECT_EQ(m.text(), "a=x=y\nb=0.1\nn=42\n");
  RunManifest p = RunManifest::parse(m.text());
  EXPECT_EQ(p.get("a"), "x=y");
  EXPECT_EQ(p.get_double("b"), 0.1);
  EXPECT_EQ(p.get_uint("n"), 42u);
  EXPECT_THROW(p.get("zz"), DataError);
  EXPECT_THROW(p.get_uint("b"), DataError);
  EXPECT_THROW(RunManifest::parse("novalue\n"), DataError);
}

TEST(Digest, KnownVectorsAndFormat)
{
  EXPECT_EQ(hex_digest(fnv1a64("")), "cbf29ce484222325");
  EXPECT_EQ(hex_digest(fnv1a64("a")), "af63dc4c8601ec8c");
  EXPECT_EQ(hex_digest(1), "0000000000000001");
}

// archive --------------------------------------------------------------------------

TEST(Archive, RoundTripGivesIdenticalPredictions)
{
  auto d = scratch_dir("archive_round");
  auto inst = tiny_instance(10, 2, 2, 3, 50.0);
  ModelArchive a;
  a.posterior = train(inst.data, inst.cfg, SamplerConfig{3, 4, 2, 8});
  a.train_x   = inst.data.x;
  a.standardizer = Standardizer::fit(inst.data.x);
  save_model(d, a);
  ModelArchive b = load_model(d);
  ASSERT_EQ(b.posterior.states.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l)
    EXPECT_TRUE(identical(a.posterior.states[l], b.posterior.states[l]));
  EXPECT_TRUE(b.train_x == a.train_x);
  ASSERT_TRUE(b.standardizer);
  EXPECT_TRUE(b.standardizer->scale == a.standardizer->scale);
  EXPECT_EQ(b.posterior.eta, a.posterior.eta);
  EXPECT_EQ(b.posterior.atom_accept_rate, a.posterior.atom_accept_rate);
  EXPECT_EQ(b.posterior.log_density_trace, a.posterior.log_density_trace);
  PredictionConfig cfg;
  EXPECT_TRUE(predict_batch(a.posterior, a.train_x, inst.data.x, cfg, 5)
              == predict_batch(b.posterior, b.train_x, inst.data.x, cfg, 5));
  EXPECT_EQ(b.manifest.get("tool_version"), tool_version);
}

TEST(Archive, TamperedOrIncompleteArchivesFail)
{
  auto d = tiny_archive(scratch_dir("archive_tamper"));
  std::string manifest = read_text(d / "manifest.txt");
  write_text(d / "manifest.txt",
             std::regex_replace(manifest, std::regex("\ndict_size=2\n"), "\ndict_size=3\n"));
  try
  {
    load_model(d);
    FAIL();
  }
  catch (const DataError& e)
  {
    EXPECT_NE(std::string(e.what()).find("dimension mismatch vs manifest"), std::string::npos)
      << e.what();
  }
  write_text(d / "manifest.txt", manifest);
  EXPECT_NO_THROW(load_model(d));
  write_text(d / "sample_0" / "z.csv", "1,0.5\n1,1\n");
  EXPECT_THROW(load_model(d), DataError);
  fs::remove(d / "manifest.txt");
  EXPECT_THROW(load_model(d), DataError);
}

TEST(Archive, DigestTracksContent)
{
  auto a = tiny_archive(scratch_dir("digest_a"), 1);
  auto b = tiny_archive(scratch_dir("digest_b"), 1);
  auto c = tiny_archive(scratch_dir("digest_c"), 2);
  EXPECT_EQ(archive_digest(a), archive_digest(b));
  EXPECT_NE(archive_digest(a), archive_digest(c));
}

// command line ----------------------------------------------------------------------

TEST(Cli, HelpAndUsageErrors)
{
  CliRun help = run({"--help"});
  EXPECT_EQ(help.code, exit_code::ok);
  EXPECT_NE(help.out.find("train"), std::string::npos);
  CliRun bad = run({"train", "--x", "a.csv", "--y", "b.csv", "--out", "m", "--bogus"});
  EXPECT_EQ(bad.code, exit_code::usage);
  EXPECT_NE(bad.err.find("--bogus"), std::string::npos);
  EXPECT_NE(bad.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run({"train", "--x", "a.csv"}).code, exit_code::usage);
  EXPECT_EQ(run({}).code, exit_code::usage);
}

TEST(Cli, DefaultCvGrids)
{
  CliRun help = run({"cv", "--help"});
  EXPECT_EQ(help.code, exit_code::ok);
  EXPECT_NE(help.out.find("[64,128,196,256]"), std::string::npos) << help.out;
  EXPECT_NE(help.out.find("[3,5,7]"), std::string::npos);
}

TEST(Cli, MissingFileIsDataError)
{
  auto d = scratch_dir("cli_missing");
  CliRun r = run({"train", "--x", str(d / "nope.csv"), "--y", str(d / "nope.csv"), "--out",
               str(d / "m")});
  EXPECT_EQ(r.code, exit_code::data);
  EXPECT_NE(r.err.find("nope.csv"), std::string::npos);
}

TEST(Cli, InvalidArgumentIsUsageError)
{
  auto d = scratch_dir("cli_invalid");
  ASSERT_EQ(run({"synth", "--n", "12", "--mx", "2", "--my", "2", "--dict-size", "2",
                 "--out-prefix", str(d / "s")}).code,
            exit_code::ok);
  CliRun r = run({"train", "--x", str(d / "s_x.csv"), "--y", str(d / "s_y.csv"), "--collect", "0",
               "--out", str(d / "m")});
  EXPECT_EQ(r.code, exit_code::usage);
  CliRun e = run({"train", "--x", str(d / "s_x.csv"), "--y", str(d / "s_y.csv"), "--eta", "-2",
               "--out", str(d / "m")});
  EXPECT_EQ(e.code, exit_code::usage);
}

TEST(Cli, PairingMismatchIsDataError)
{
  auto d = scratch_dir("cli_pairing");
  write_text(d / "x.csv", "1,2\n3,4\n5,6\n");
  write_text(d / "y.csv", "1\n2\n");
  CliRun r = run({"train", "--x", str(d / "x.csv"), "--y", str(d / "y.csv"), "--out", str(d / "m")});
  EXPECT_EQ(r.code, exit_code::data);
  EXPECT_NE(r.err.find("PairingMismatch(3,2)"), std::string::npos) << r.err;
}

TEST(Cli, NoLikelihoodSupportIsNumericalError)
{
  auto d = scratch_dir("cli_support");
  tiny_archive(d / "m");
  write_text(d / "far.csv", "1e200,1e200\n");
  CliRun r = run({"predict", "--model", str(d / "m"), "--x", str(d / "far.csv"), "--out",
               str(d / "p.csv")});
  EXPECT_EQ(r.code, exit_code::numerical);
  EXPECT_FALSE(fs::exists(d / "p.csv"));
}

TEST(Cli, SynthTrainPredictEvaluatePipeline)
{
  auto d = scratch_dir("cli_pipeline");
  auto pipeline = [&](const std::string& tag) {
    const std::string p = str(d / tag);
    EXPECT_EQ(run({"synth", "--n", "20", "--mx", "3", "--my", "2", "--dict-size", "2", "--seed",
                   "4", "--out-prefix", p}).code,
              exit_code::ok);
    std::string x_before = read_text(p + "_x.csv");
    CliRun t = run({"train", "--x", p + "_x.csv", "--y", p + "_y.csv", "--dict-size", "3",
                 "--burn-in", "3", "--collect", "4", "--seed", "9", "--hyper", "0.5",
                 "--standardize-x", "--out", p + "_model"});
    EXPECT_EQ(t.code, exit_code::ok) << t.err;
    EXPECT_EQ(read_text(p + "_x.csv"), x_before);
    CliRun pr = run({"predict", "--model", p + "_model", "--x", p + "_x.csv", "--samples", "2",
                  "--out", p + "_pred.csv"});
    EXPECT_EQ(pr.code, exit_code::ok) << pr.err;
    CliRun ev = run({"evaluate", "--model", p + "_model", "--x", p + "_x.csv", "--y", p + "_y.csv",
                  "--out", p + "_eval.csv"});
    EXPECT_EQ(ev.code, exit_code::ok) << ev.err;
  };
  pipeline("a");
  pipeline("b");

  const std::string a = str(d / "a"), b = str(d / "b");
  EXPECT_EQ(read_text(a + "_x.csv"), read_text(b + "_x.csv"));
  EXPECT_EQ(archive_digest(a + "_model"), archive_digest(b + "_model"));
  EXPECT_EQ(read_text(a + "_pred.csv"), read_text(b + "_pred.csv"));
  EXPECT_EQ(read_text(a + "_eval.csv"), read_text(b + "_eval.csv"));

  RunManifest m = RunManifest::parse(read_text(a + "_model/manifest.txt"));
  for (const char* key : {"hyper.a_s", "hyper.b_s", "hyper.a_xy", "hyper.b_xy", "hyper.a_x",
                          "hyper.b_x", "hyper.a_y", "hyper.b_y"})
    EXPECT_EQ(m.get_double(key), 0.5) << key;
  EXPECT_EQ(m.get("standardize_x"), "1");
  EXPECT_EQ(m.get_uint("seed"), 9u);
  EXPECT_EQ(m.get("x_digest"), file_digest(a + "_x.csv"));

  const std::string pred = read_text(a + "_pred.csv");
  EXPECT_EQ(pred.rfind("y0,y1\n", 0), 0u);
  EXPECT_EQ(std::count(pred.begin(), pred.end(), '\n'), 21);
  RunManifest pm = RunManifest::parse(read_text(a + "_pred.csv.manifest.txt"));
  EXPECT_EQ(pm.get("model_digest"), archive_digest(a + "_model"));
  EXPECT_EQ(pm.get_uint("samples"), 2u);
  RunManifest em = RunManifest::parse(read_text(a + "_eval.csv.manifest.txt"));
  EXPECT_TRUE(std::isfinite(em.get_double("mean_rms_degrees")));
  EXPECT_EQ(read_text(a + "_eval.csv").rfind("frame,rms_degrees\n", 0), 0u);
}

TEST(Cli, CvWritesTableAndBest)
{
  auto d = scratch_dir("cli_cv");
  const std::string p = str(d / "s");
  ASSERT_EQ(run({"synth", "--n", "12", "--mx", "2", "--my", "2", "--dict-size", "2",
                 "--out-prefix", p}).code,
            exit_code::ok);
  CliRun r = run({"cv", "--x", p + "_x.csv", "--y", p + "_y.csv", "--k-grid", "2,3", "--j-grid",
               "1,2", "--folds", "2", "--burn-in", "2", "--collect", "2", "--out",
               str(d / "cv.csv")});
  ASSERT_EQ(r.code, exit_code::ok) << r.err;
  const std::string table = read_text(d / "cv.csv");
  EXPECT_EQ(table.rfind("k,j,mean_rms,fold0,fold1\n", 0), 0u);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 5);
  RunManifest m = RunManifest::parse(read_text(str(d / "cv.csv") + ".manifest.txt"));
  EXPECT_NE(table.find(m.get("best_k") + "," + m.get("best_j") + ","), std::string::npos);
}

TEST(Cli, DiagnoseOracleAndBench)
{
  auto d = scratch_dir("cli_diag");
  CliRun o = run({"diagnose", "--mode", "oracle", "--out", str(d / "o.csv")});
  EXPECT_EQ(o.code, exit_code::ok);
  EXPECT_EQ(RunManifest::parse(read_text(str(d / "o.csv") + ".manifest.txt")).get("passed"), "1");
  CliRun b = run({"bench", "--gram-sizes", "4,8", "--dict-sizes", "2,3", "--repeats", "1", "--out",
               str(d / "b.csv")});
  EXPECT_EQ(b.code, exit_code::ok) << b.err;
  EXPECT_EQ(read_text(d / "b.csv").rfind("kind,size,seconds\n", 0), 0u);
  EXPECT_EQ(run({"diagnose", "--mode", "other", "--out", str(d / "x.csv")}).code,
            exit_code::usage);
}
