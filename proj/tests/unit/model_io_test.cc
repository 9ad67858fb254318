#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cpa/error.h"
#include "cpa/model_io.h"
#include "test_support.h"

namespace cpa {
namespace {

namespace fs = std::filesystem;

Eigen::MatrixXd UnitColumns(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd d(rows, cols);
  for (Eigen::Index k = 0; k < d.size(); ++k) d.data()[k] = g(rng);
  d.colwise().normalize();
  return d;
}

// Two components over three parts, the second lacking part 2.
ModelContainer MakeContainer() {
  std::mt19937_64 rng(42);
  ModelContainer mc;
  for (int i = 0; i < 3; ++i) {
    PartDomain d;
    d.part_id = i + 1;
    d.width = 6;
    d.height = 5;
    d.center = {10.0 + 15 * i, 20.0 + 0.5 * i};
    mc.domains.push_back(d);
    mc.part_names.push_back("p" + std::to_string(i + 1));
  }
  mc.labels = {"s0", "s0", "s1", "s1"};
  ModelContainer::Component a;
  a.mask = {true, true, true};
  a.shape = test::RandomShapeModel(rng, 3);
  for (int i = 0; i < 3; ++i) a.dictionaries.push_back(UnitColumns(rng, 30, 4));
  ModelContainer::Component b;
  b.mask = {true, false, true};
  b.shape = test::RandomShapeModel(rng, 2);
  b.dictionaries = {a.dictionaries[0], a.dictionaries[2]};
  mc.components = {a, b};
  mc.holistic = UnitColumns(rng, 4800, 2);
  return mc;
}

void ExpectBitEqual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
}

std::string ErrorOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const IoError& e) {
    return e.what();
  }
  return "";
}

TEST(ArrayIo, RoundTripIsBitExact) {
  const auto dir = test::TempDir("array_io");
  Eigen::MatrixXd m(3, 2);
  m << 1.0 / 3, -0.0, std::numeric_limits<double>::denorm_min(), 1e308, -2.5, 0.1;
  WriteArray((dir / "m.cpad").string(), m);
  ExpectBitEqual(ReadArray((dir / "m.cpad").string()), m);
  EXPECT_EQ(fs::file_size(dir / "m.cpad"), 14u + 6 * 8);

  WriteArray((dir / "empty.cpad").string(), Eigen::MatrixXd(0, 5));
  const Eigen::MatrixXd e = ReadArray((dir / "empty.cpad").string());
  EXPECT_EQ(e.rows(), 0);
  EXPECT_EQ(e.cols(), 5);
}

TEST(ArrayIo, TruncatedFileNamesTheOffset) {
  const auto dir = test::TempDir("array_trunc");
  const auto p = dir / "m.cpad";
  WriteArray(p.string(), Eigen::MatrixXd::Ones(4, 4));
  fs::resize_file(p, 14 + 8 * 5 + 3);
  const std::string msg = ErrorOf([&] { ReadArray(p.string()); });
  EXPECT_NE(msg.find("offset 57"), std::string::npos) << msg;

  fs::resize_file(p, 9);
  EXPECT_NE(ErrorOf([&] { ReadArray(p.string()); }).find("truncated header"), std::string::npos);
}

TEST(ArrayIo, RejectsBadMagicVersionAndTrailingBytes) {
  const auto dir = test::TempDir("array_bad");
  const auto p = dir / "m.cpad";
  WriteArray(p.string(), Eigen::MatrixXd::Ones(2, 2));
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const char v[2] = {7, 0};
    f.write(v, 2);
  }
  EXPECT_NE(ErrorOf([&] { ReadArray(p.string()); }).find("unsupported array version 7"),
            std::string::npos);

  WriteArray(p.string(), Eigen::MatrixXd::Ones(2, 2));
  std::ofstream(p, std::ios::app | std::ios::binary) << 'x';
  EXPECT_NE(ErrorOf([&] { ReadArray(p.string()); }).find("trailing bytes"), std::string::npos);

  std::ofstream(p, std::ios::binary) << "NOPE0000000000";
  EXPECT_NE(ErrorOf([&] { ReadArray(p.string()); }).find("not a CPAD"), std::string::npos);
  EXPECT_THROW(ReadArray((dir / "missing.cpad").string()), IoError);
}

TEST(FileChecksum, KnownFnv1aValues) {
  const auto dir = test::TempDir("fnv");
  std::ofstream(dir / "empty", std::ios::binary).flush();
  std::ofstream(dir / "a", std::ios::binary) << "a";
  std::ofstream(dir / "foobar", std::ios::binary) << "foobar";
  EXPECT_EQ(FileChecksum((dir / "empty").string()), 0xcbf29ce484222325ull);
  EXPECT_EQ(FileChecksum((dir / "a").string()), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(FileChecksum((dir / "foobar").string()), 0x85944171f73967e8ull);
}

TEST(ModelIo, SaveLoadRoundTripIsBitExact) {
  const auto dir = test::TempDir("model_rt");
  const ModelContainer mc = MakeContainer();
  SaveModel(mc, (dir / "m").string());
  const ModelContainer back = LoadModel((dir / "m").string());

  EXPECT_EQ(back.part_names, mc.part_names);
  EXPECT_EQ(back.labels, mc.labels);
  EXPECT_EQ(back.lambda_hat, mc.lambda_hat);
  EXPECT_EQ(back.eta_hat, mc.eta_hat);
  EXPECT_EQ(back.vartheta, mc.vartheta);
  ASSERT_EQ(back.domains.size(), mc.domains.size());
  for (size_t i = 0; i < mc.domains.size(); ++i) {
    EXPECT_EQ(back.domains[i].part_id, mc.domains[i].part_id);
    EXPECT_EQ(back.domains[i].center.u, mc.domains[i].center.u);
    EXPECT_EQ(back.domains[i].center.v, mc.domains[i].center.v);
  }
  ASSERT_EQ(back.components.size(), 2u);
  for (size_t c = 0; c < 2; ++c) {
    const auto& a = mc.components[c];
    const auto& b = back.components[c];
    EXPECT_EQ(b.mask, a.mask);
    EXPECT_EQ(b.shape.config.parent, a.shape.config.parent);
    for (int i = 0; i < a.shape.parts(); ++i) {
      ExpectBitEqual(b.shape.z[i].mu, a.shape.z[i].mu);
      ExpectBitEqual(b.shape.z[i].lambda, a.shape.z[i].lambda);
    }
    ASSERT_EQ(b.dictionaries.size(), a.dictionaries.size());
    for (size_t i = 0; i < a.dictionaries.size(); ++i) ExpectBitEqual(b.dictionaries[i], a.dictionaries[i]);
  }
  ExpectBitEqual(back.holistic, mc.holistic);

  // Saving the loaded model reproduces every file byte for byte.
  SaveModel(back, (dir / "again").string());
  for (const auto& entry : fs::directory_iterator(dir / "m")) {
    const auto other = dir / "again" / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(FileChecksum(entry.path().string()), FileChecksum(other.string())) << other;
  }
}

TEST(ModelIo, ComponentModelMasksDomains) {
  const ModelContainer mc = MakeContainer();
  const CpaModel m = mc.ComponentModel(1);
  ASSERT_EQ(m.parts(), 2);
  EXPECT_EQ(m.domains[1].part_id, 3);
  EXPECT_THROW(mc.ComponentModel(2), Error);
  const GalleryModel g = mc.Gallery(0);
  ASSERT_EQ(g.subjects.size(), 2u);
  EXPECT_EQ(g.subjects[1].label, "s1");
  EXPECT_EQ(g.subjects[1].dictionaries[0].cols(), 2);
}

TEST(ModelIo, DetectsCorruption) {
  const auto dir = test::TempDir("model_bad");
  const std::string d = (dir / "m").string();
  SaveModel(MakeContainer(), d);
  {
    std::fstream f(fs::path(d) / "c0_part2.cpad", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20);
    f.put('\x7f');
  }
  EXPECT_NE(ErrorOf([&] { LoadModel(d); }).find("checksum mismatch"), std::string::npos);

  SaveModel(MakeContainer(), d);
  nlohmann::json doc;
  std::ifstream(fs::path(d) / "model.json") >> doc;
  doc["version"] = kModelFormatVersion + 1;
  std::ofstream(fs::path(d) / "model.json") << doc.dump(1);
  EXPECT_NE(ErrorOf([&] { LoadModel(d); }).find("unsupported model format version"), std::string::npos);

  doc["version"] = kModelFormatVersion;
  doc["components"][0]["dictionaries"][0]["rows"] = 31;
  std::ofstream(fs::path(d) / "model.json") << doc.dump(1);
  EXPECT_NE(ErrorOf([&] { LoadModel(d); }).find("dimensions disagree"), std::string::npos);

  std::ofstream(fs::path(d) / "model.json") << "{ not json";
  EXPECT_THROW(LoadModel(d), IoError);
  EXPECT_THROW(LoadModel((dir / "nowhere").string()), IoError);
}

TEST(ModelIo, ReportJsonKeys) {
  AlignmentResult r;
  r.nu = {SimTransform{1, 2, 0, 0}};
  r.residual_l1 = {0.5};
  r.converged = true;
  r.iterations = 3;
  const auto j = nlohmann::json::parse(AlignmentJson(r));
  for (const char* k : {"sigma", "nu", "combined", "residual_l1", "converged", "iterations",
                        "holistic_line_search_failed"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j["iterations"], 3);

  RecognitionReport rep;
  rep.identity = "s1";
  rep.per_part_votes = {"s1", "s0", "s1"};
  rep.per_part_residual = {0.1, 0.2, 0.3};
  rep.subject_labels = {"s0", "s1"};
  rep.per_subject_residuals = Eigen::MatrixXd::Ones(2, 3);
  rep.converged = {true, false};
  rep.pruned_set = {"s0", "s1"};
  const auto k = nlohmann::json::parse(RecognitionJson(rep));
  EXPECT_EQ(k["identity"], "s1");
  EXPECT_EQ(k["votes"].size(), 3u);
  for (const char* key : {"vote_residuals", "tie_broken", "subjects", "residuals", "converged",
                          "pruned", "depth", "timings_ms"}) {
    EXPECT_TRUE(k.contains(key)) << key;
  }
}

TEST(ModelIo, OverlayIsBinaryPpm) {
  const auto dir = test::TempDir("overlay");
  const ModelContainer mc = MakeContainer();
  const CpaModel m = mc.ComponentModel(0);
  AlignmentResult r;
  r.nu = TransformSet(3);
  const Image y = test::SmoothImage(60, 40, 2);
  WriteOverlay((dir / "o.ppm").string(), y, m, r);
  std::ifstream in(dir / "o.ppm", std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  EXPECT_EQ(magic, "P6");
  EXPECT_EQ(w, 60);
  EXPECT_EQ(h, 40);
  EXPECT_EQ(fs::file_size(dir / "o.ppm"), std::uintmax_t(in.tellg()) + 1 + 60 * 40 * 3);
}

}  // namespace
}  // namespace cpa
