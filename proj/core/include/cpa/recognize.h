#ifndef CPA_RECOGNIZE_H_
#define CPA_RECOGNIZE_H_

#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpa/align.h"
#include "cpa/geometry.h"
#include "cpa/image.h"
#include "cpa/shape_model.h"

namespace cpa {

// Per-subject part dictionaries sharing one shape model and part table.
struct GalleryModel {
  struct Subject {
    std::string label;
    std::vector<Eigen::MatrixXd> dictionaries;  // per part
  };

  Rect canonical{0.0, 0.0, 60.0, 80.0};
  std::vector<PartDomain> domains;
  TreeShapeModel shape;
  double lambda_hat = kDefaultLambdaHat;
  double eta_hat = kDefaultEtaHat;
  std::vector<Subject> subjects;

  int parts() const { return int(domains.size()); }
  // The CPA model restricted to one subject's dictionaries.
  CpaModel SubjectModel(int s) const;
  // Splits the columns of a gallery model by their labels (first-seen order).
  static GalleryModel FromModel(const CpaModel& model, const std::vector<std::string>& labels,
                                double lambda_hat = kDefaultLambdaHat,
                                double eta_hat = kDefaultEtaHat);
  void Validate() const;
};

AlignmentResult SubjectAlign(const Image& y, const GalleryModel& gallery, int s,
                             const InitHint& hint, const AlmSettings& settings);

struct PruneResult {
  std::vector<std::vector<int>> orders;  // per part: subjects by ascending residual
  std::vector<std::vector<int>> sets;    // sets[j - 1] = B_j, sorted
  int depth = 0;                         // C
  std::vector<int> pruned;               // B_C, sorted
};

// residuals(s, i) = ||e_s<i>||_1. B_j is the union of every part's top-j
// subjects; C is the smallest j with |B_j| >= P (all subjects if never).
PruneResult Prune(const Eigen::MatrixXd& residuals, int target);

struct PartDecision {
  int candidate = -1;              // index into the candidate list
  std::vector<double> residuals;   // per candidate
};

// "ns": nearest subspace; "src-lite": ridge joint least squares with
// class-restricted residuals. Throws Error on an unknown method.
PartDecision ClassifyPart(const Eigen::VectorXd& probe,
                          const std::vector<Eigen::MatrixXd>& candidates,
                          const std::string& method);

// Plurality vote over labels. Ties go to the smaller summed residual of
// the supporting parts, then to the label seen first.
std::string Vote(const std::vector<std::string>& labels, const std::vector<double>& residuals,
                 bool* tie_broken = nullptr);

struct RecognizeSettings {
  AlmSettings alm;
  int prune = 20;
  std::string method = "ns";
  InitHint hint;
  int threads = 0;  // <= 0: CPA_THREADS or the hardware concurrency
};

struct RecognitionReport {
  std::string identity;
  std::vector<std::string> per_part_votes;
  std::vector<double> per_part_residual;  // classifier residual of each vote
  std::vector<std::string> subject_labels;
  Eigen::MatrixXd per_subject_residuals;  // N x m
  std::vector<bool> converged;            // per subject
  std::vector<std::string> pruned_set;
  int depth = 0;
  bool tie_broken = false;
  double align_ms = 0.0;
  double classify_ms = 0.0;
};

RecognitionReport Recognize(const Image& y, const GalleryModel& gallery,
                            const RecognizeSettings& settings);

// Resamples a dictionary whose columns live on dom by the domain map t:
// column k becomes p -> D_k(t(p)), renormalized.
Eigen::MatrixXd RewarpDictionary(const Eigen::MatrixXd& d, const PartDomain& dom,
                                 const SimTransform& t);

// Worker count: explicit value, else CPA_THREADS, else hardware threads.
int ThreadCount(int requested, int jobs);

}  // namespace cpa

#endif  // CPA_RECOGNIZE_H_
