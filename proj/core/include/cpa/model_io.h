#ifndef CPA_MODEL_IO_H_
#define CPA_MODEL_IO_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cpa/align.h"
#include "cpa/learn.h"
#include "cpa/recognize.h"

namespace cpa {

inline constexpr int kModelFormatVersion = 1;
inline constexpr uint16_t kArrayFormatVersion = 1;

// Binary array: "CPAD", u16 version, u32 rows, u32 cols, then rows*cols
// little-endian f64 in column-major order.
void WriteArray(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd ReadArray(const std::string& path);

// FNV-1a 64 over the raw bytes of a file.
uint64_t FileChecksum(const std::string& path);

// Everything a trained model directory holds.
struct ModelContainer {
  struct Component {
    std::vector<bool> mask;  // over the part table
    TreeShapeModel shape;    // over the component's parts, in table order
    std::vector<Eigen::MatrixXd> dictionaries;
  };

  Rect canonical{0.0, 0.0, 60.0, 80.0};
  std::vector<PartDomain> domains;
  std::vector<std::string> part_names;
  double lambda_hat = kDefaultLambdaHat;
  double eta_hat = kDefaultEtaHat;
  double vartheta = kDefaultVartheta;
  std::vector<Component> components;
  std::vector<std::string> labels;  // dictionary column labels
  Eigen::MatrixXd holistic;         // optional whole-face dictionary

  static ModelContainer FromMixture(const MixtureCpaModel& mix, const LearnSettings& settings,
                                    std::vector<std::string> part_names = {});
  CpaModel ComponentModel(int c) const;
  GalleryModel Gallery(int c = 0) const;
  void Validate() const;
};

// model.json plus one array file per dictionary. Throws IoError.
void SaveModel(const ModelContainer& model, const std::string& dir);
ModelContainer LoadModel(const std::string& dir);

// JSON text for reports.
std::string AlignmentJson(const AlignmentResult& result);
std::string RecognitionJson(const RecognitionReport& report);

// Overlay rendering of fitted part boxes (binary PPM).
void WriteOverlay(const std::string& path, const Image& y, const CpaModel& model,
                  const AlignmentResult& result);

}  // namespace cpa

#endif  // CPA_MODEL_IO_H_
