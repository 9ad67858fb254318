#include "cpa/learn.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cpa/error.h"

namespace cpa {

void TrainingSet::Validate() const {
  const size_t n = images.size();
  if (init_sigma.size() != n || init_nu.size() != n) {
    throw Error("training set: image and initialization counts differ");
  }
  if (!labels.empty() && labels.size() != n) throw Error("training set: label count mismatch");
  if (domains.empty()) throw Error("training set: empty part table");
  for (size_t k = 0; k < n; ++k) {
    CheckImage(images[k]);
    if (init_nu[k].size() != domains.size()) {
      throw Error("training set: image " + std::to_string(k) + " has a wrong part count");
    }
  }
}

TrainingSet TrainingSet::FromLandmarks(const Rect& canonical, std::vector<PartDomain> domains,
                                       std::vector<Image> images,
                                       const std::vector<std::vector<Point>>& landmarks) {
  if (landmarks.size() != images.size()) throw Error("one landmark list per image required");
  TrainingSet ts;
  ts.canonical = canonical;
  ts.domains = std::move(domains);
  ts.images = std::move(images);
  for (size_t k = 0; k < ts.images.size(); ++k) {
    for (const Point& p : landmarks[k]) {
      if (p.u < 0 || p.v < 0 || p.u > ts.images[k].width - 1 || p.v > ts.images[k].height - 1) {
        throw Error("landmark outside image " + std::to_string(k));
      }
    }
    const AlignmentState st = StateFromLandmarks(ts.domains, landmarks[k]);
    ts.init_sigma.push_back(st.sigma);
    ts.init_nu.push_back(st.nu);
  }
  return ts;
}

void LearnSettings::Validate() const {
  alm.Validate();
  if (!(lambda_hat > 0.0) || !(eta_hat >= 0.0) || !(vartheta >= 0.0)) {
    throw Error("invalid learning weights");
  }
  if (heuristic_iters < 0 || max_rounds < 1 || !(round_tol > 0.0)) {
    throw Error("invalid learning schedule");
  }
}

std::vector<int> MixtureSpec::Parts(int component) const {
  std::vector<int> out;
  for (int i = 0; i < int(availability[component].size()); ++i) {
    if (availability[component][i]) out.push_back(i);
  }
  return out;
}

void MixtureSpec::Validate(int m) const {
  if (availability.empty()) throw Error("mixture has no components");
  for (int c = 0; c < components(); ++c) {
    if (int(availability[c].size()) != m) throw Error("availability mask has wrong length");
    if (Parts(c).empty()) throw Error("component " + std::to_string(c) + " has no parts");
  }
}

namespace {

// One mixture component inside the batch engine.
struct Component {
  const TrainingSet* ts = nullptr;
  std::vector<int> parts;  // global indices
  TreeShapeModel shape;    // over local part indices
  double eta = 0.0;
  std::vector<AlignmentState> states;  // local nu
  std::vector<ImageGradients> grads;
  std::vector<GaussianWishartPrior> priors;
  LearnTrace trace;
};

struct Column {
  int comp;
  int image;
  int local;
};

struct BatchOutput {
  std::vector<Eigen::MatrixXd> low_rank, sparse;  // indexed by global part
  int iterations = 0;
  bool converged = false;
};

std::vector<std::vector<Column>> ColumnsByPart(const std::vector<Component>& comps, int m) {
  std::vector<std::vector<Column>> cols(m);
  for (int c = 0; c < int(comps.size()); ++c) {
    for (int k = 0; k < comps[c].ts->size(); ++k) {
      for (int j = 0; j < int(comps[c].parts.size()); ++j) {
        cols[comps[c].parts[j]].push_back({c, k, j});
      }
    }
  }
  return cols;
}

TreeShapeModel FlatShape(int parts) {
  TreeShapeModel s;
  s.config = TreeConfig::Star(parts);
  s.z.assign(parts, EdgeGaussian{});
  return s;
}

// Linearized low-rank + sparse alignment over all columns of every part.
// warmup: eta = 0 and no holistic re-split.
BatchOutput RunBatch(std::vector<Component>& comps, const std::vector<PartDomain>& domains,
                     const LearnSettings& settings, int max_gn, bool warmup) {
  const AlmSettings& alm = settings.alm;
  const int m = int(domains.size());
  const auto cols = ColumnsByPart(comps, m);
  std::vector<double> lambda(m);
  for (int p = 0; p < m; ++p) lambda[p] = PartLambda(domains[p].size(), settings.lambda_hat);

  BatchOutput out;
  out.low_rank.resize(m);
  out.sparse.resize(m);
  std::vector<Eigen::MatrixXd> r(m), gamma(m), jd(m);
  std::vector<std::vector<WarpJacobianMatrix>> jac(m);
  std::vector<std::vector<Mat4>> jtj(m);
  // Per component and image: the d x m_c increment.
  std::vector<std::vector<Mat4X>> delta(comps.size());
  std::vector<TreeShapeModel> flat(comps.size());
  for (size_t c = 0; c < comps.size(); ++c) flat[c] = FlatShape(int(comps[c].parts.size()));
  // index[c][k][j]: column of (component c, image k, local part j) in its part.
  std::vector<std::vector<std::vector<int>>> index(comps.size());
  for (size_t c = 0; c < comps.size(); ++c) {
    index[c].assign(comps[c].ts->size(), std::vector<int>(comps[c].parts.size()));
  }
  for (int p = 0; p < m; ++p) {
    for (int col = 0; col < int(cols[p].size()); ++col) {
      index[cols[p][col].comp][cols[p][col].image][cols[p][col].local] = col;
    }
  }

  for (int gn = 0; gn < max_gn; ++gn) {
    out.iterations = gn + 1;
    Eigen::Index total = 0;
    for (int p = 0; p < m; ++p) {
      const int n = int(cols[p].size());
      r[p].resize(domains[p].size(), n);
      jac[p].resize(n);
      jtj[p].resize(n);
      for (int col = 0; col < n; ++col) {
        const Column& cl = cols[p][col];
        const Component& comp = comps[cl.comp];
        const AlignmentState& st = comp.states[cl.image];
        const PartLinearization lin = LinearizePart(comp.ts->images[cl.image],
                                                    comp.grads[cl.image], st.sigma,
                                                    st.nu[cl.local], domains[p]);
        r[p].col(col) = lin.y;
        jac[p][col] = lin.jacobian;
        jtj[p][col] = lin.jacobian.transpose() * lin.jacobian;
      }
      total += r[p].size();
    }
    Eigen::VectorXd stacked(total);
    for (int p = 0, off = 0; p < m; off += int(r[p].size()), ++p) {
      stacked.segment(off, r[p].size()) = Eigen::Map<const Eigen::VectorXd>(r[p].data(), r[p].size());
    }
    double beta = alm.InitialBeta(stacked);
    for (int p = 0; p < m; ++p) {
      out.sparse[p].setZero(r[p].rows(), r[p].cols());
      out.low_rank[p].setZero(r[p].rows(), r[p].cols());
      gamma[p].setZero(r[p].rows(), r[p].cols());
      jd[p].setZero(r[p].rows(), r[p].cols());
    }
    for (size_t c = 0; c < comps.size(); ++c) {
      delta[c].assign(comps[c].ts->size(), Mat4X::Zero(4, comps[c].parts.size()));
    }

    for (int inner = 0; inner < alm.max_inner_iters; ++inner) {
      for (int p = 0; p < m; ++p) {
        if (r[p].cols() == 0) continue;
        const Eigen::MatrixXd base = r[p] + jd[p] + gamma[p] / beta;
        out.low_rank[p] = SvdShrinkGram(base - out.sparse[p], 1.0 / beta);
        out.sparse[p] = SoftThreshold(Eigen::MatrixXd(base - out.low_rank[p]), lambda[p] / beta);
      }
      for (size_t c = 0; c < comps.size(); ++c) {
        Component& comp = comps[c];
        const int mc = int(comp.parts.size());
        BlockSystem sys;
        sys.model = warmup ? &flat[c] : &comp.shape;
        sys.eta = warmup ? 0.0 : comp.eta;
        sys.g_blocks.resize(mc);
        sys.q.resize(4, mc);
        for (int k = 0; k < comp.ts->size(); ++k) {
          for (int j = 0; j < mc; ++j) {
            const int p = comp.parts[j];
            const int col = index[c][k][j];
            sys.g_blocks[j] = beta * jtj[p][col];
            sys.q.col(j) = beta * jac[p][col].transpose() *
                           (out.low_rank[p].col(col) + out.sparse[p].col(col) - r[p].col(col) -
                            gamma[p].col(col) / beta);
          }
          delta[c][k] = SolveDeltaSystem(sys, comp.states[k].nu);
          if (!delta[c][k].allFinite()) throw SolverError("diverged");
        }
      }
      double hmax = 0;
      for (int p = 0; p < m; ++p) {
        for (int col = 0; col < int(cols[p].size()); ++col) {
          const Column& cl = cols[p][col];
          jd[p].col(col) = jac[p][col] * delta[cl.comp][cl.image].col(cl.local);
        }
        if (r[p].cols() == 0) continue;
        const Eigen::MatrixXd h = r[p] + jd[p] - out.low_rank[p] - out.sparse[p];
        hmax = std::max(hmax, h.cwiseAbs().maxCoeff());
        gamma[p] += beta * h;
      }
      beta = std::min(alm.rho * beta, alm.beta_max);
      if (hmax <= alm.inner_tol) break;
    }

    double change = 0;
    for (size_t c = 0; c < comps.size(); ++c) {
      Component& comp = comps[c];
      for (int k = 0; k < comp.ts->size(); ++k) {
        change = std::max(change, delta[c][k].cwiseAbs().maxCoeff());
        for (size_t j = 0; j < comp.parts.size(); ++j) {
          SimTransform& nu = comp.states[k].nu[j];
          nu = SimTransform::FromVector(nu.AsVector() + delta[c][k].col(j));
          if (!nu.IsFinite()) {
            throw SolverError("diverged at linearization " + std::to_string(gn + 1) +
                              " (image " + std::to_string(k) + ")");
          }
        }
        if (!warmup && !settings.freeze_sigma) {
          const HolisticResult hs =
              HolisticStep(comp.states[k].sigma, comp.states[k].nu, comp.shape);
          comp.states[k].sigma = hs.sigma;
          comp.states[k].nu = hs.nu;
        }
      }
    }
    if (change <= alm.outer_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

std::vector<Vec4> EdgeSamples(const Component& comp, int i) {
  std::vector<Vec4> samples;
  samples.reserve(comp.states.size());
  for (const auto& st : comp.states) samples.push_back(NuDelta(st.nu, comp.shape.config, i));
  return samples;
}

void CheckStatistics(const std::vector<Vec4>& samples) {
  Vec4 mean = Vec4::Zero();
  for (const auto& x : samples) mean += x;
  mean /= double(samples.size());
  double trace = 0;
  for (const auto& x : samples) trace += (x - mean).squaredNorm();
  if (trace / double(samples.size()) < 1e-12) throw SolverError("degenerate statistics");
}

// ML fit of every edge for the component's current tree.
void FitShape(Component& comp) {
  const int mc = int(comp.parts.size());
  comp.shape.z.resize(mc);
  for (int i = 0; i < mc; ++i) {
    const auto samples = EdgeSamples(comp, i);
    CheckStatistics(samples);
    comp.shape.z[i] = MlEstimate(samples);
  }
}

void UpdateShape(Component& comp, double vartheta) {
  for (int i = 0; i < int(comp.parts.size()); ++i) {
    const auto samples = EdgeSamples(comp, i);
    comp.shape.z[i] = vartheta > 0.0 ? MapEstimate(samples, comp.priors[i]) : MlEstimate(samples);
  }
}

Eigen::MatrixXd NormalizedColumns(const std::vector<Component>& comps,
                                  const std::vector<Column>& cols, const PartDomain& dom, int p) {
  Eigen::MatrixXd d(dom.size(), cols.size());
  for (int col = 0; col < int(cols.size()); ++col) {
    const Column& cl = cols[col];
    const Component& comp = comps[cl.comp];
    const AlignmentState& st = comp.states[cl.image];
    d.col(col) = NormalizeIntensity(
        WarpPart(comp.ts->images[cl.image], Compose(st.sigma, st.nu[cl.local]), dom));
    if (d.col(col).norm() == 0.0) {
      throw SolverError("part " + std::to_string(p + 1) + " has an all-zero crop");
    }
  }
  return d;
}

double MaxStateChange(const std::vector<Component>& comps,
                      const std::vector<std::vector<AlignmentState>>& before) {
  double change = 0;
  for (size_t c = 0; c < comps.size(); ++c) {
    for (size_t k = 0; k < comps[c].states.size(); ++k) {
      const auto& a = comps[c].states[k];
      const auto& b = before[c][k];
      change = std::max(change, MaxParamChange(a.nu, b.nu));
      change = std::max(change, (a.sigma.AsVector() - b.sigma.AsVector()).cwiseAbs().maxCoeff());
    }
  }
  return change;
}

std::vector<std::vector<AlignmentState>> Snapshot(const std::vector<Component>& comps) {
  std::vector<std::vector<AlignmentState>> s;
  for (const auto& c : comps) s.push_back(c.states);
  return s;
}

void PrepareComponent(Component& comp, const TrainingSet& ts, std::vector<int> parts,
                      const LearnSettings& settings) {
  comp.ts = &ts;
  comp.parts = std::move(parts);
  std::vector<PartDomain> doms;
  for (int p : comp.parts) doms.push_back(ts.domains[p]);
  comp.eta = ShapeEta(doms, settings.eta_hat);
  comp.states.clear();
  comp.grads.clear();
  for (int k = 0; k < ts.size(); ++k) {
    AlignmentState st;
    st.sigma = ts.init_sigma[k];
    for (int p : comp.parts) st.nu.push_back(ts.init_nu[k][p]);
    comp.states.push_back(std::move(st));
    comp.grads.push_back(ComputeGradients(ts.images[k]));
  }
}

// Joint learning of a group of components sharing parts.
void LearnGroup(std::vector<Component>& comps, const std::vector<PartDomain>& domains,
                const std::vector<const TreeConfig*>& trees, const LearnSettings& settings) {
  if (settings.heuristic_iters > 0) {
    RunBatch(comps, domains, settings, settings.heuristic_iters, true);
  }
  for (size_t c = 0; c < comps.size(); ++c) {
    Component& comp = comps[c];
    const int n = int(comp.states.size());
    if (trees[c]) {
      comp.shape.config = *trees[c];
    } else {
      std::vector<TransformSet> samples;
      for (const auto& st : comp.states) samples.push_back(st.nu);
      for (int i = 0; i < int(comp.parts.size()); ++i) {
        std::vector<Vec4> own;
        for (const auto& st : comp.states) own.push_back(st.nu[i].AsVector());
        CheckStatistics(own);
      }
      comp.shape.config = LearnTreeConfig(samples, settings.vartheta);
    }
    if (comp.shape.config.parts() != int(comp.parts.size())) {
      throw Error("tree configuration does not match the component's parts");
    }
    comp.shape.config.Validate();
    FitShape(comp);
    comp.priors.clear();
    if (settings.vartheta > 0.0) {
      for (const auto& g : comp.shape.z) {
        comp.priors.push_back(PriorFromGaussian(g, settings.vartheta, n));
      }
    }
    comp.trace = LearnTrace{};
    comp.trace.mean_log_cov_det.push_back(MeanLogCovarianceDet(comp.shape));
  }

  for (int round = 0; round < settings.max_rounds; ++round) {
    const auto before = Snapshot(comps);
    RunBatch(comps, domains, settings, settings.alm.max_outer_iters, false);
    for (auto& comp : comps) {
      comp.trace.trees.push_back(comp.shape.config);
      UpdateShape(comp, settings.vartheta);
      comp.trace.mean_log_cov_det.push_back(MeanLogCovarianceDet(comp.shape));
      comp.trace.rounds = round + 1;
    }
    if (MaxStateChange(comps, before) <= settings.round_tol) {
      for (auto& comp : comps) comp.trace.converged = true;
      break;
    }
  }
}

// Connected groups of components linked by shared parts.
std::vector<std::vector<int>> ComponentGroups(const MixtureSpec& spec) {
  const int c = spec.components();
  std::vector<int> group(c, -1);
  std::vector<std::vector<int>> groups;
  for (int s = 0; s < c; ++s) {
    if (group[s] >= 0) continue;
    groups.push_back({s});
    group[s] = int(groups.size()) - 1;
    for (size_t q = 0; q < groups.back().size(); ++q) {
      const int a = groups.back()[q];
      for (int b = 0; b < c; ++b) {
        if (group[b] >= 0) continue;
        for (size_t i = 0; i < spec.availability[a].size(); ++i) {
          if (spec.availability[a][i] && spec.availability[b][i]) {
            group[b] = group[s];
            groups.back().push_back(b);
            break;
          }
        }
      }
    }
    std::sort(groups.back().begin(), groups.back().end());
  }
  return groups;
}

CpaModel PackageComponent(const Component& comp, const std::vector<Component>& group,
                          const TrainingSet& ts, const LearnSettings& settings) {
  const int m = int(ts.domains.size());
  const auto cols = ColumnsByPart(group, m);
  CpaModel model;
  model.canonical = ts.canonical;
  for (int p : comp.parts) {
    model.domains.push_back(ts.domains[p]);
    model.dictionaries.push_back(NormalizedColumns(group, cols[p], ts.domains[p], p));
  }
  model.shape = comp.shape;
  model.SetWeights(settings.lambda_hat, settings.eta_hat);
  return model;
}

}  // namespace

DictionaryFit LearnDictionaries(const TrainingSet& ts, const TreeShapeModel& shape,
                                const LearnSettings& settings) {
  ts.Validate();
  settings.Validate();
  if (ts.size() < 2) throw Error("dictionary learning needs at least two images");
  if (shape.parts() != int(ts.domains.size())) throw Error("shape model part count mismatch");
  shape.Validate();
  std::vector<int> parts(ts.domains.size());
  std::iota(parts.begin(), parts.end(), 0);
  std::vector<Component> comps(1);
  PrepareComponent(comps[0], ts, parts, settings);
  comps[0].shape = shape;
  const BatchOutput out =
      RunBatch(comps, ts.domains, settings, settings.alm.max_outer_iters, false);
  const auto cols = ColumnsByPart(comps, int(parts.size()));
  DictionaryFit fit;
  for (int p : parts) fit.dictionaries.push_back(NormalizedColumns(comps, cols[p], ts.domains[p], p));
  fit.low_rank = out.low_rank;
  fit.sparse = out.sparse;
  fit.states = comps[0].states;
  fit.iterations = out.iterations;
  fit.converged = out.converged;
  return fit;
}

MixtureCpaModel LearnMixture(const std::vector<TrainingSet>& per_component,
                             const MixtureSpec& spec, const std::vector<const TreeConfig*>& trees,
                             const LearnSettings& settings) {
  settings.Validate();
  if (per_component.empty() || int(per_component.size()) != spec.components()) {
    throw Error("one training set per mixture component required");
  }
  if (!trees.empty() && int(trees.size()) != spec.components()) {
    throw Error("one tree (or none) per mixture component required");
  }
  const TrainingSet& first = per_component.front();
  spec.Validate(int(first.domains.size()));
  for (int c = 0; c < spec.components(); ++c) {
    const TrainingSet& ts = per_component[c];
    ts.Validate();
    if (ts.size() == 0) throw Error("component " + std::to_string(c) + " has no images");
    if (ts.size() < 2) throw Error("component " + std::to_string(c) + " needs two images");
    if (ts.domains.size() != first.domains.size()) throw Error("components disagree on parts");
  }

  MixtureCpaModel mix;
  mix.canonical = first.canonical;
  mix.domains = first.domains;
  mix.components.resize(spec.components());
  for (const auto& group : ComponentGroups(spec)) {
    std::vector<Component> comps(group.size());
    std::vector<const TreeConfig*> group_trees;
    for (size_t g = 0; g < group.size(); ++g) {
      PrepareComponent(comps[g], per_component[group[g]], spec.Parts(group[g]), settings);
      group_trees.push_back(trees.empty() ? nullptr : trees[group[g]]);
    }
    LearnGroup(comps, first.domains, group_trees, settings);
    for (size_t g = 0; g < group.size(); ++g) {
      MixtureComponent& out = mix.components[group[g]];
      out.parts = comps[g].parts;
      out.model = PackageComponent(comps[g], comps, per_component[group[g]], settings);
      out.trace = comps[g].trace;
      out.states = comps[g].states;
    }
  }
  for (const auto& ts : per_component) {
    for (int k = 0; k < ts.size(); ++k) {
      mix.labels.push_back(ts.labels.empty() ? std::to_string(mix.labels.size()) : ts.labels[k]);
    }
  }
  return mix;
}

LearnedModel LearnModel(const TrainingSet& ts, const TreeConfig* tree,
                        const LearnSettings& settings) {
  ts.Validate();
  MixtureSpec spec;
  spec.availability.assign(1, std::vector<bool>(ts.domains.size(), true));
  const MixtureCpaModel mix = LearnMixture({ts}, spec, {tree}, settings);
  LearnedModel out;
  out.model = mix.components[0].model;
  out.trace = mix.components[0].trace;
  out.fit.states = mix.components[0].states;
  out.fit.dictionaries = out.model.dictionaries;
  out.labels = mix.labels;
  return out;
}

LearnedModel FitDictionariesFixedShape(const TrainingSet& gallery, const TreeShapeModel& shape,
                                       const LearnSettings& settings) {
  LearnedModel out;
  out.fit = LearnDictionaries(gallery, shape, settings);
  out.model.canonical = gallery.canonical;
  out.model.domains = gallery.domains;
  out.model.dictionaries = out.fit.dictionaries;
  out.model.shape = shape;
  out.model.SetWeights(settings.lambda_hat, settings.eta_hat);
  for (int k = 0; k < gallery.size(); ++k) {
    out.labels.push_back(gallery.labels.empty() ? std::to_string(k) : gallery.labels[k]);
  }
  return out;
}

double LearningObjective(const DictionaryFit& fit, const TreeShapeModel& shape,
                         const std::vector<PartDomain>& domains, const LearnSettings& settings) {
  double total = 0;
  for (size_t p = 0; p < fit.low_rank.size(); ++p) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(fit.low_rank[p]);
    total += svd.singularValues().sum();
    total += PartLambda(domains[p].size(), settings.lambda_hat) * fit.sparse[p].lpNorm<1>();
  }
  const double eta = ShapeEta(domains, settings.eta_hat);
  for (const auto& st : fit.states) total += eta * ShapeCost(st.nu, shape);
  return total;
}

}  // namespace cpa
