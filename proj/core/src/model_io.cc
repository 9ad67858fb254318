#include "cpa/model_io.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cpa/error.h"
#include "json.hpp"

namespace cpa {

using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "array I/O writes the host representation as little-endian");

template <typename T>
void Put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool Get(std::istream& in, T* v) {
  in.read(reinterpret_cast<char*>(v), sizeof(T));
  return in.gcount() == std::streamsize(sizeof(T));
}

std::string Hex(uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

json ArrayRef(const std::string& dir, const std::string& file, const Eigen::MatrixXd& m) {
  const std::string path = (std::filesystem::path(dir) / file).string();
  WriteArray(path, m);
  return {{"file", file}, {"rows", m.rows()}, {"cols", m.cols()}, {"fnv1a64", Hex(FileChecksum(path))}};
}

Eigen::MatrixXd LoadArrayRef(const std::string& dir, const json& ref) {
  const std::string path = (std::filesystem::path(dir) / ref.at("file").get<std::string>()).string();
  const uint64_t sum = FileChecksum(path);
  if (Hex(sum) != ref.at("fnv1a64").get<std::string>()) {
    throw IoError(path + ": checksum mismatch");
  }
  Eigen::MatrixXd m = ReadArray(path);
  if (m.rows() != ref.at("rows").get<Eigen::Index>() || m.cols() != ref.at("cols").get<Eigen::Index>()) {
    throw IoError(path + ": dimensions disagree with model.json");
  }
  return m;
}

}  // namespace

void WriteArray(const std::string& path, const Eigen::MatrixXd& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write("CPAD", 4);
  Put<uint16_t>(out, kArrayFormatVersion);
  Put<uint32_t>(out, uint32_t(m.rows()));
  Put<uint32_t>(out, uint32_t(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()), std::streamsize(m.size() * sizeof(double)));
  if (!out) throw IoError("failed writing " + path);
}

Eigen::MatrixXd ReadArray(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open array file " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "CPAD", 4) != 0) {
    throw IoError(path + ": not a CPAD array file");
  }
  uint16_t version = 0;
  uint32_t rows = 0, cols = 0;
  if (!Get(in, &version) || !Get(in, &rows) || !Get(in, &cols)) {
    throw IoError(path + ": truncated header");
  }
  if (version != kArrayFormatVersion) {
    throw IoError(path + ": unsupported array version " + std::to_string(version));
  }
  Eigen::MatrixXd m(rows, cols);
  const std::streamsize want = std::streamsize(m.size() * sizeof(double));
  in.read(reinterpret_cast<char*>(m.data()), want);
  if (in.gcount() != want) {
    throw IoError(path + ": truncated array data at offset " + std::to_string(14 + in.gcount()) +
                  " (expected " + std::to_string(14 + want) + " bytes)");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes");
  return m;
}

uint64_t FileChecksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= uint8_t(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

ModelContainer ModelContainer::FromMixture(const MixtureCpaModel& mix, const LearnSettings& settings,
                                           std::vector<std::string> part_names) {
  ModelContainer mc;
  mc.canonical = mix.canonical;
  mc.domains = mix.domains;
  mc.part_names = std::move(part_names);
  if (mc.part_names.empty()) {
    for (const auto& d : mix.domains) mc.part_names.push_back("p" + std::to_string(d.part_id));
  }
  mc.lambda_hat = settings.lambda_hat;
  mc.eta_hat = settings.eta_hat;
  mc.vartheta = settings.vartheta;
  for (const auto& comp : mix.components) {
    Component c;
    c.mask.assign(mix.domains.size(), false);
    for (int p : comp.parts) c.mask[p] = true;
    c.shape = comp.model.shape;
    c.dictionaries = comp.model.dictionaries;
    mc.components.push_back(std::move(c));
  }
  mc.labels = mix.labels;
  return mc;
}

CpaModel ModelContainer::ComponentModel(int c) const {
  if (c < 0 || c >= int(components.size())) throw Error("model has no component " + std::to_string(c));
  const Component& comp = components[c];
  CpaModel m;
  m.canonical = canonical;
  for (size_t i = 0; i < domains.size(); ++i) {
    if (comp.mask[i]) m.domains.push_back(domains[i]);
  }
  m.dictionaries = comp.dictionaries;
  m.shape = comp.shape;
  m.SetWeights(lambda_hat, eta_hat);
  return m;
}

GalleryModel ModelContainer::Gallery(int c) const {
  return GalleryModel::FromModel(ComponentModel(c), labels, lambda_hat, eta_hat);
}

void ModelContainer::Validate() const {
  if (domains.empty()) throw Error("model has an empty part table");
  if (part_names.size() != domains.size()) throw Error("model: part names do not match parts");
  if (components.empty()) throw Error("model has no components");
  for (size_t c = 0; c < components.size(); ++c) {
    const Component& comp = components[c];
    if (comp.mask.size() != domains.size()) throw Error("model: mask length mismatch");
    ComponentModel(int(c)).Validate();
  }
}

void SaveModel(const ModelContainer& model, const std::string& dir) {
  model.Validate();
  std::filesystem::create_directories(dir);
  json doc;
  doc["format"] = "cpa-model";
  doc["version"] = kModelFormatVersion;
  doc["canonical"] = {model.canonical.width, model.canonical.height};
  json parts = json::array();
  for (size_t i = 0; i < model.domains.size(); ++i) {
    const PartDomain& d = model.domains[i];
    parts.push_back({{"id", d.part_id},
                     {"name", model.part_names[i]},
                     {"width", d.width},
                     {"height", d.height},
                     {"center", {d.center.u, d.center.v}}});
  }
  doc["parts"] = parts;
  doc["weights"] = {{"lambda_hat", model.lambda_hat},
                    {"eta_hat", model.eta_hat},
                    {"vartheta", model.vartheta}};
  doc["labels"] = model.labels;
  json comps = json::array();
  for (size_t c = 0; c < model.components.size(); ++c) {
    const auto& comp = model.components[c];
    json jc;
    jc["mask"] = comp.mask;
    jc["parent"] = comp.shape.config.parent;
    json edges = json::array();
    for (const auto& e : comp.shape.z) {
      std::vector<double> v(e.mu.data(), e.mu.data() + 4);
      v.insert(v.end(), e.lambda.data(), e.lambda.data() + 16);
      edges.push_back(v);
    }
    jc["edges"] = edges;
    json dicts = json::array();
    int local = 0;
    for (size_t i = 0; i < model.domains.size(); ++i) {
      if (!comp.mask[i]) continue;
      const std::string file = "c" + std::to_string(c) + "_part" +
                               std::to_string(model.domains[i].part_id) + ".cpad";
      dicts.push_back(ArrayRef(dir, file, comp.dictionaries[local++]));
    }
    jc["dictionaries"] = dicts;
    comps.push_back(jc);
  }
  doc["components"] = comps;
  doc["holistic"] = model.holistic.size() ? ArrayRef(dir, "holistic.cpad", model.holistic) : json();
  const std::string path = (std::filesystem::path(dir) / "model.json").string();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(1) << "\n";
  if (!out) throw IoError("failed writing " + path);
}

ModelContainer LoadModel(const std::string& dir) {
  const std::string path = (std::filesystem::path(dir) / "model.json").string();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  ModelContainer mc;
  try {
    if (doc.value("format", "") != "cpa-model") throw IoError(path + ": not a CPA model");
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw IoError(path + ": unsupported model format version " + std::to_string(version));
    }
    mc.canonical = {0.0, 0.0, doc.at("canonical")[0].get<double>(), doc.at("canonical")[1].get<double>()};
    for (const auto& p : doc.at("parts")) {
      PartDomain d;
      d.part_id = p.at("id").get<int>();
      d.width = p.at("width").get<int>();
      d.height = p.at("height").get<int>();
      d.center = {p.at("center")[0].get<double>(), p.at("center")[1].get<double>()};
      mc.domains.push_back(d);
      mc.part_names.push_back(p.at("name").get<std::string>());
    }
    const json& w = doc.at("weights");
    mc.lambda_hat = w.at("lambda_hat").get<double>();
    mc.eta_hat = w.at("eta_hat").get<double>();
    mc.vartheta = w.at("vartheta").get<double>();
    mc.labels = doc.at("labels").get<std::vector<std::string>>();
    for (const auto& jc : doc.at("components")) {
      ModelContainer::Component comp;
      comp.mask = jc.at("mask").get<std::vector<bool>>();
      comp.shape.config.parent = jc.at("parent").get<std::vector<int>>();
      for (const auto& e : jc.at("edges")) {
        const auto v = e.get<std::vector<double>>();
        if (v.size() != 20) throw IoError(path + ": edge must hold 4 + 16 values");
        EdgeGaussian g;
        g.mu = Eigen::Map<const Vec4>(v.data());
        g.lambda = Eigen::Map<const Mat4>(v.data() + 4);
        comp.shape.z.push_back(g);
      }
      for (const auto& ref : jc.at("dictionaries")) comp.dictionaries.push_back(LoadArrayRef(dir, ref));
      mc.components.push_back(std::move(comp));
    }
    if (!doc.at("holistic").is_null()) mc.holistic = LoadArrayRef(dir, doc.at("holistic"));
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  try {
    mc.Validate();
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw IoError(path + ": " + e.what());
  }
  return mc;
}

namespace {

json TransformJson(const SimTransform& t) { return {t.tu, t.tv, t.s, t.theta}; }

}  // namespace

std::string AlignmentJson(const AlignmentResult& r) {
  json doc;
  doc["sigma"] = TransformJson(r.sigma);
  json nu = json::array();
  for (const auto& n : r.nu) nu.push_back(TransformJson(n));
  doc["nu"] = nu;
  json zeta = json::array();
  for (const auto& z : r.Combined()) zeta.push_back(TransformJson(z));
  doc["combined"] = zeta;
  doc["residual_l1"] = r.residual_l1;
  doc["converged"] = r.converged;
  doc["iterations"] = r.iterations;
  doc["holistic_line_search_failed"] = r.holistic_failed;
  return doc.dump(1);
}

std::string RecognitionJson(const RecognitionReport& r) {
  json doc;
  doc["identity"] = r.identity;
  doc["votes"] = r.per_part_votes;
  doc["vote_residuals"] = r.per_part_residual;
  doc["tie_broken"] = r.tie_broken;
  doc["subjects"] = r.subject_labels;
  json rows = json::array();
  for (Eigen::Index s = 0; s < r.per_subject_residuals.rows(); ++s) {
    std::vector<double> row(r.per_subject_residuals.cols());
    for (Eigen::Index i = 0; i < r.per_subject_residuals.cols(); ++i) {
      row[i] = r.per_subject_residuals(s, i);
    }
    rows.push_back(row);
  }
  doc["residuals"] = rows;
  doc["converged"] = r.converged;
  doc["pruned"] = r.pruned_set;
  doc["depth"] = r.depth;
  doc["timings_ms"] = {{"align", r.align_ms}, {"classify", r.classify_ms}};
  return doc.dump(1);
}

void WriteOverlay(const std::string& path, const Image& y, const CpaModel& model,
                  const AlignmentResult& result) {
  const int w = y.width, h = y.height;
  std::vector<unsigned char> rgb(size_t(w) * h * 3);
  for (int k = 0; k < w * h; ++k) {
    const auto g = static_cast<unsigned char>(std::lround(std::clamp(y.data[k], 0.0, 1.0) * 255));
    rgb[3 * k] = rgb[3 * k + 1] = rgb[3 * k + 2] = g;
  }
  const auto plot = [&](double u, double v, int part) {
    const int iu = int(std::lround(u)), iv = int(std::lround(v));
    if (iu < 0 || iv < 0 || iu >= w || iv >= h) return;
    static const unsigned char palette[6][3] = {{255, 64, 64}, {64, 255, 64},  {64, 128, 255},
                                                {255, 255, 0}, {255, 0, 255}, {0, 255, 255}};
    const auto* c = palette[part % 6];
    unsigned char* px = &rgb[3 * (size_t(iv) * w + iu)];
    px[0] = c[0];
    px[1] = c[1];
    px[2] = c[2];
  };
  const TransformSet zeta = result.Combined();
  for (int i = 0; i < model.parts() && i < int(zeta.size()); ++i) {
    const Rect b = model.domains[i].Bounds();
    const Point corners[4] = {{b.x, b.y}, {b.x + b.width, b.y}, {b.x + b.width, b.y + b.height},
                              {b.x, b.y + b.height}};
    for (int e = 0; e < 4; ++e) {
      const Point a = corners[e], c = corners[(e + 1) % 4];
      const int steps = int(4 * std::max(std::abs(c.u - a.u), std::abs(c.v - a.v))) + 1;
      for (int k = 0; k <= steps; ++k) {
        const double t = double(k) / steps;
        const Point p = Apply(zeta[i], {a.u + t * (c.u - a.u), a.v + t * (c.v - a.v)});
        plot(p.u, p.v, i);
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), std::streamsize(rgb.size()));
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace cpa
