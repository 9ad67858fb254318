#include "cpa/recognize.h"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include <Eigen/Dense>

#include "cpa/error.h"

namespace cpa {

CpaModel GalleryModel::SubjectModel(int s) const {
  if (s < 0 || s >= int(subjects.size())) throw Error("unknown gallery subject");
  CpaModel m;
  m.canonical = canonical;
  m.domains = domains;
  m.dictionaries = subjects[s].dictionaries;
  m.shape = shape;
  m.SetWeights(lambda_hat, eta_hat);
  return m;
}

GalleryModel GalleryModel::FromModel(const CpaModel& model, const std::vector<std::string>& labels,
                                     double lambda_hat, double eta_hat) {
  GalleryModel g;
  g.canonical = model.canonical;
  g.domains = model.domains;
  g.shape = model.shape;
  g.lambda_hat = lambda_hat;
  g.eta_hat = eta_hat;
  if (model.parts() == 0) return g;
  if (int(labels.size()) != model.dictionaries[0].cols()) {
    throw Error("gallery: one label per dictionary column required");
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<int>> columns;
  for (int k = 0; k < int(labels.size()); ++k) {
    if (!columns.count(labels[k])) order.push_back(labels[k]);
    columns[labels[k]].push_back(k);
  }
  for (const auto& label : order) {
    Subject s;
    s.label = label;
    for (const auto& d : model.dictionaries) {
      Eigen::MatrixXd sub(d.rows(), columns[label].size());
      for (size_t c = 0; c < columns[label].size(); ++c) sub.col(c) = d.col(columns[label][c]);
      s.dictionaries.push_back(std::move(sub));
    }
    g.subjects.push_back(std::move(s));
  }
  return g;
}

void GalleryModel::Validate() const {
  if (subjects.empty()) throw Error("gallery is empty");
  for (int s = 0; s < int(subjects.size()); ++s) SubjectModel(s).Validate();
}

AlignmentResult SubjectAlign(const Image& y, const GalleryModel& gallery, int s,
                             const InitHint& hint, const AlmSettings& settings) {
  return Align(y, gallery.SubjectModel(s), hint, settings);
}

PruneResult Prune(const Eigen::MatrixXd& residuals, int target) {
  if (target < 1) throw Error("prune target must be at least 1");
  const int n = int(residuals.rows()), m = int(residuals.cols());
  PruneResult res;
  res.orders.resize(m);
  for (int i = 0; i < m; ++i) {
    res.orders[i].resize(n);
    std::iota(res.orders[i].begin(), res.orders[i].end(), 0);
    std::stable_sort(res.orders[i].begin(), res.orders[i].end(),
                     [&](int a, int b) { return residuals(a, i) < residuals(b, i); });
  }
  std::set<int> acc;
  for (int j = 1; j <= n; ++j) {
    for (int i = 0; i < m; ++i) acc.insert(res.orders[i][j - 1]);
    res.sets.emplace_back(acc.begin(), acc.end());
    res.depth = j;
    if (int(acc.size()) >= target) break;
  }
  if (!res.sets.empty()) res.pruned = res.sets.back();
  return res;
}

PartDecision ClassifyPart(const Eigen::VectorXd& probe,
                          const std::vector<Eigen::MatrixXd>& candidates,
                          const std::string& method) {
  if (candidates.empty()) throw Error("classify: no candidates");
  PartDecision dec;
  dec.residuals.resize(candidates.size());
  if (method == "ns") {
    for (size_t c = 0; c < candidates.size(); ++c) {
      const Eigen::MatrixXd& d = candidates[c];
      const Eigen::VectorXd x = d.colPivHouseholderQr().solve(probe);
      dec.residuals[c] = (probe - d * x).norm();
    }
  } else if (method == "src-lite") {
    Eigen::Index cols = 0;
    for (const auto& d : candidates) cols += d.cols();
    Eigen::MatrixXd all(probe.size(), cols);
    for (size_t c = 0, off = 0; c < candidates.size(); off += candidates[c].cols(), ++c) {
      all.middleCols(off, candidates[c].cols()) = candidates[c];
    }
    Eigen::MatrixXd gram = all.transpose() * all;
    gram.diagonal().array() += 1e-4;
    const Eigen::VectorXd x = gram.ldlt().solve(all.transpose() * probe);
    for (size_t c = 0, off = 0; c < candidates.size(); off += candidates[c].cols(), ++c) {
      dec.residuals[c] = (probe - candidates[c] * x.segment(off, candidates[c].cols())).norm();
    }
  } else {
    throw Error("unknown classifier '" + method + "' (expected ns or src-lite)");
  }
  dec.candidate = int(std::min_element(dec.residuals.begin(), dec.residuals.end()) -
                      dec.residuals.begin());
  return dec;
}

std::string Vote(const std::vector<std::string>& labels, const std::vector<double>& residuals,
                 bool* tie_broken) {
  if (labels.empty()) throw Error("vote: no labels");
  if (residuals.size() != labels.size()) throw Error("vote: residual count mismatch");
  std::vector<std::string> order;
  std::map<std::string, std::pair<int, double>> tally;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!tally.count(labels[i])) order.push_back(labels[i]);
    tally[labels[i]].first += 1;
    tally[labels[i]].second += residuals[i];
  }
  int top = 0;
  for (const auto& [label, t] : tally) top = std::max(top, t.first);
  std::string best;
  int tied = 0;
  for (const auto& label : order) {
    const auto& t = tally[label];
    if (t.first != top) continue;
    ++tied;
    if (best.empty() || t.second < tally[best].second) best = label;
  }
  if (tie_broken) *tie_broken = tied > 1;
  return best;
}

Eigen::MatrixXd RewarpDictionary(const Eigen::MatrixXd& d, const PartDomain& dom,
                                 const SimTransform& t) {
  const double u0 = dom.center.u - 0.5 * (dom.width - 1);
  const double v0 = dom.center.v - 0.5 * (dom.height - 1);
  Eigen::MatrixXd out(d.rows(), d.cols());
  for (Eigen::Index k = 0; k < d.cols(); ++k) {
    const Image crop = PartToImage(d.col(k), dom);
    for (int g = 0; g < dom.size(); ++g) {
      const Point p = Apply(t, dom.GridPoint(g));
      out(g, k) = SampleBilinear(crop, p.u - u0, p.v - v0);
    }
    out.col(k) = NormalizeIntensity(out.col(k));
  }
  return out;
}

int ThreadCount(int requested, int jobs) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("CPA_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = int(std::max(1u, std::thread::hardware_concurrency()));
  return std::max(1, std::min(n, std::max(jobs, 1)));
}

RecognitionReport Recognize(const Image& y, const GalleryModel& gallery,
                            const RecognizeSettings& settings) {
  using Clock = std::chrono::steady_clock;
  CheckImage(y);
  gallery.Validate();
  const int n = int(gallery.subjects.size()), m = gallery.parts();
  RecognitionReport rep;
  for (const auto& s : gallery.subjects) rep.subject_labels.push_back(s.label);

  // Independent subject-wise alignments; each worker owns fixed slots.
  const auto t0 = Clock::now();
  std::vector<AlignmentResult> aligned(n);
  std::vector<std::string> failures(n);
  const int workers = ThreadCount(settings.threads, n);
  const auto run = [&](int w) {
    for (int s = w; s < n; s += workers) {
      try {
        aligned[s] = SubjectAlign(y, gallery, s, settings.hint, settings.alm);
      } catch (const std::exception& e) {
        failures[s] = e.what();
      }
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& t : pool) t.join();
  }
  for (int s = 0; s < n; ++s) {
    if (!failures[s].empty()) {
      throw SolverError("alignment to subject " + gallery.subjects[s].label + " failed: " +
                        failures[s]);
    }
  }
  const auto t1 = Clock::now();

  rep.per_subject_residuals.resize(n, m);
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < m; ++i) rep.per_subject_residuals(s, i) = aligned[s].residual_l1[i];
    rep.converged.push_back(aligned[s].converged);
  }
  const PruneResult pr = Prune(rep.per_subject_residuals, settings.prune);
  rep.depth = pr.depth;
  for (int s : pr.pruned) rep.pruned_set.push_back(gallery.subjects[s].label);

  for (int i = 0; i < m; ++i) {
    std::vector<SimTransform> top;
    for (int j = 0; j < pr.depth; ++j) {
      const int s = pr.orders[i][j];
      top.push_back(Compose(aligned[s].sigma, aligned[s].nu[i]));
    }
    const SimTransform mean = MeanTransform(top);
    const Eigen::VectorXd probe = NormalizeIntensity(WarpPart(y, mean, gallery.domains[i]));
    std::vector<Eigen::MatrixXd> candidates;
    for (int s : pr.pruned) {
      const SimTransform zeta = Compose(aligned[s].sigma, aligned[s].nu[i]);
      candidates.push_back(RewarpDictionary(gallery.subjects[s].dictionaries[i],
                                            gallery.domains[i], Compose(Invert(zeta), mean)));
    }
    const PartDecision dec = ClassifyPart(probe, candidates, settings.method);
    rep.per_part_votes.push_back(gallery.subjects[pr.pruned[dec.candidate]].label);
    rep.per_part_residual.push_back(dec.residuals[dec.candidate]);
  }
  rep.identity = Vote(rep.per_part_votes, rep.per_part_residual, &rep.tie_broken);
  const auto t2 = Clock::now();
  rep.align_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  rep.classify_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
  return rep;
}

}  // namespace cpa
