#ifndef CPA_CONFIG_H_
#define CPA_CONFIG_H_

#include <map>
#include <string>
#include <vector>

#include "cpa/geometry.h"
#include "cpa/image.h"
#include "cpa/learn.h"
#include "cpa/solver.h"

namespace cpa {

// Flat `key = value` configuration (a TOML subset: comments, bare or
// quoted strings, numbers, booleans, dotted keys; no tables or arrays).
class Config {
 public:
  static Config Parse(const std::string& text, const std::string& origin = "<string>");
  static Config Load(const std::string& path);

  bool Has(const std::string& key) const { return values_.count(key) > 0; }
  std::string GetString(const std::string& key, const std::string& fallback) const;
  double GetDouble(const std::string& key, double fallback) const;
  int GetInt(const std::string& key, int fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;
  // Keys not consumed by any getter; typos surface as errors upstream.
  std::vector<std::string> Unused() const;
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
  std::string origin_;
};

AlmSettings AlmFromConfig(const Config& cfg);
LearnSettings LearnFromConfig(const Config& cfg);

// Training manifest:
//   canonical W H
//   part <id> <name> <w> <h> <cu> <cv>
//   component <index> <part id>...          (optional; default: all parts)
//   image <pgm> <landmarks> [component] [subject]
// Paths are relative to the manifest's directory.
struct Manifest {
  struct Entry {
    std::string image;
    std::string landmarks;
    int component = 0;
    std::string label;
  };
  Rect canonical{0.0, 0.0, 60.0, 80.0};
  std::vector<PartDomain> domains;
  std::vector<std::string> part_names;
  std::vector<std::vector<int>> components;  // 0-based part indices
  std::vector<Entry> entries;

  static Manifest Load(const std::string& path);
  int component_count() const;
};

// One "u v" pair per line; '#' comments allowed.
std::vector<Point> ReadLandmarks(const std::string& path);

// Reads all images and landmarks of one component into a training set.
TrainingSet LoadTrainingSet(const Manifest& manifest, int component);

}  // namespace cpa

#endif  // CPA_CONFIG_H_
