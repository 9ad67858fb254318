#include "cpa/config.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cpa/align.h"
#include "cpa/error.h"

namespace cpa {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing '#' comment that is not inside a quoted string.
std::string StripComment(const std::string& line) {
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Config Config::Parse(const std::string& text, const std::string& origin) {
  Config cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = Trim(StripComment(line));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IoError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = Trim(line.substr(0, eq));
    std::string value = Trim(line.substr(eq + 1));
    if (key.empty()) throw IoError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (cfg.values_.count(key)) {
      throw IoError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

Config Config::Load(const std::string& path) { return Parse(ReadFile(path), path); }

std::string Config::GetString(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  return it->second;
}

double Config::GetDouble(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw IoError(origin_ + ": key '" + key + "' expects a number, got '" + it->second + "'");
  }
}

int Config::GetInt(const std::string& key, int fallback) const {
  const double v = GetDouble(key, fallback);
  if (v != double(int(v))) throw IoError(origin_ + ": key '" + key + "' expects an integer");
  return int(v);
}

bool Config::GetBool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  if (it->second == "true") return true;
  if (it->second == "false") return false;
  throw IoError(origin_ + ": key '" + key + "' expects true or false");
}

std::vector<std::string> Config::Unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

AlmSettings AlmFromConfig(const Config& cfg) {
  AlmSettings s;
  s.beta0 = cfg.GetDouble("alm.beta0", s.beta0);
  s.rho = cfg.GetDouble("alm.rho", s.rho);
  s.beta_max = cfg.GetDouble("alm.beta_max", s.beta_max);
  s.inner_tol = cfg.GetDouble("alm.inner_tol", s.inner_tol);
  s.max_inner_iters = cfg.GetInt("alm.max_inner_iters", s.max_inner_iters);
  s.outer_tol = cfg.GetDouble("alm.outer_tol", s.outer_tol);
  s.max_outer_iters = cfg.GetInt("alm.max_outer_iters", s.max_outer_iters);
  s.max_alternations = cfg.GetInt("alm.max_alternations", s.max_alternations);
  s.Validate();
  return s;
}

LearnSettings LearnFromConfig(const Config& cfg) {
  LearnSettings s;
  s.alm = AlmFromConfig(cfg);
  s.lambda_hat = cfg.GetDouble("lambda_hat", s.lambda_hat);
  s.eta_hat = cfg.GetDouble("eta_hat", s.eta_hat);
  s.vartheta = cfg.GetDouble("vartheta", s.vartheta);
  s.freeze_sigma = cfg.GetBool("freeze_sigma", s.freeze_sigma);
  s.heuristic_iters = cfg.GetInt("heuristic_iters", s.heuristic_iters);
  s.max_rounds = cfg.GetInt("max_rounds", s.max_rounds);
  s.round_tol = cfg.GetDouble("round_tol", s.round_tol);
  s.Validate();
  return s;
}

int Manifest::component_count() const {
  int c = int(components.size());
  for (const auto& e : entries) c = std::max(c, e.component + 1);
  return std::max(c, 1);
}

Manifest Manifest::Load(const std::string& path) {
  namespace fs = std::filesystem;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  const auto resolve = [&](const std::string& p) {
    return fs::path(p).is_absolute() ? p : (base / p).string();
  };
  Manifest m;
  std::vector<int> part_ids;
  std::vector<std::pair<int, std::vector<int>>> comp_ids;
  std::string line;
  int lineno = 0;
  const auto fail = [&](const std::string& why) {
    throw IoError(path + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = Trim(StripComment(line));
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "canonical") {
      double w = 0, h = 0;
      if (!(ls >> w >> h) || w <= 0 || h <= 0) fail("canonical expects W H");
      m.canonical = {0.0, 0.0, w, h};
    } else if (kind == "part") {
      int id = 0, w = 0, h = 0;
      std::string name;
      double cu = 0, cv = 0;
      if (!(ls >> id >> name >> w >> h >> cu >> cv)) fail("part expects id name w h cu cv");
      if (w < 4 || h < 4) fail("part domains must be at least 4 x 4");
      if (std::find(part_ids.begin(), part_ids.end(), id) != part_ids.end()) {
        fail("duplicate part id " + std::to_string(id));
      }
      PartDomain d;
      d.part_id = id;
      d.width = w;
      d.height = h;
      d.center = {cu, cv};
      m.domains.push_back(d);
      m.part_names.push_back(name);
      part_ids.push_back(id);
    } else if (kind == "component") {
      int idx = 0, id = 0;
      if (!(ls >> idx) || idx < 0) fail("component expects an index");
      std::vector<int> ids;
      while (ls >> id) ids.push_back(id);
      if (ids.empty()) fail("component lists no parts");
      comp_ids.push_back({idx, ids});
    } else if (kind == "image") {
      Entry e;
      if (!(ls >> e.image >> e.landmarks)) fail("image expects <pgm> <landmarks>");
      e.image = resolve(e.image);
      e.landmarks = resolve(e.landmarks);
      std::string comp;
      if (ls >> comp) {
        try {
          e.component = std::stoi(comp);
        } catch (const std::exception&) {
          fail("bad component index '" + comp + "'");
        }
        ls >> e.label;
      }
      if (e.component < 0) fail("negative component index");
      m.entries.push_back(e);
    } else {
      fail("unknown directive '" + kind + "'");
    }
  }
  if (m.domains.empty()) throw IoError(path + ": no parts declared");
  if (m.entries.empty()) throw IoError(path + ": no images listed");
  for (const auto& [idx, ids] : comp_ids) {
    if (int(m.components.size()) <= idx) m.components.resize(idx + 1);
    for (int id : ids) {
      const auto it = std::find(part_ids.begin(), part_ids.end(), id);
      if (it == part_ids.end()) throw IoError(path + ": component refers to unknown part " + std::to_string(id));
      m.components[idx].push_back(int(it - part_ids.begin()));
    }
    std::sort(m.components[idx].begin(), m.components[idx].end());
  }
  const int c = m.component_count();
  m.components.resize(c);
  for (auto& parts : m.components) {
    if (parts.empty()) {
      parts.resize(m.domains.size());
      for (size_t i = 0; i < parts.size(); ++i) parts[i] = int(i);
    }
  }
  return m;
}

std::vector<Point> ReadLandmarks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open landmark file " + path);
  std::vector<Point> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = Trim(StripComment(line));
    if (line.empty()) continue;
    std::istringstream ls(line);
    Point p;
    if (!(ls >> p.u >> p.v)) {
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 'u v'");
    }
    pts.push_back(p);
  }
  return pts;
}

TrainingSet LoadTrainingSet(const Manifest& manifest, int component) {
  if (component < 0 || component >= manifest.component_count()) {
    throw IoError("manifest has no component " + std::to_string(component));
  }
  const std::vector<int>& parts = manifest.components[component];
  std::vector<PartDomain> avail;
  for (int p : parts) avail.push_back(manifest.domains[p]);
  TrainingSet ts;
  ts.canonical = manifest.canonical;
  ts.domains = manifest.domains;
  for (const auto& e : manifest.entries) {
    if (e.component != component) continue;
    Image img = ReadPgm(e.image);
    std::vector<Point> lm = ReadLandmarks(e.landmarks);
    if (lm.size() != parts.size() && lm.size() != manifest.domains.size()) {
      throw IoError(e.landmarks + ": expected " + std::to_string(parts.size()) + " landmarks, found " +
                    std::to_string(lm.size()));
    }
    if (lm.size() == manifest.domains.size() && parts.size() != lm.size()) {
      std::vector<Point> sub;
      for (int p : parts) sub.push_back(lm[p]);
      lm = sub;
    }
    for (const auto& p : lm) {
      if (p.u < 0 || p.v < 0 || p.u > img.width - 1 || p.v > img.height - 1) {
        throw IoError(e.landmarks + ": landmark outside the image");
      }
    }
    const AlignmentState st = StateFromLandmarks(avail, lm);
    TransformSet nu(manifest.domains.size());
    for (size_t j = 0; j < parts.size(); ++j) nu[parts[j]] = st.nu[j];
    ts.images.push_back(std::move(img));
    ts.init_sigma.push_back(st.sigma);
    ts.init_nu.push_back(nu);
    ts.labels.push_back(e.label.empty() ? std::to_string(ts.labels.size()) : e.label);
  }
  if (ts.images.empty()) {
    throw IoError("component " + std::to_string(component) + " has no images");
  }
  return ts;
}

}  // namespace cpa
