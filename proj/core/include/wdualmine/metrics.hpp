#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wdualmine/image.hpp"

namespace wdualmine::metrics {

// Conventions shared by the whole suite (also emitted into report
// metadata so the numbers are self-describing):
//   - histograms: 256 bins over round(255 * v), base-2 logs, 0 log 0 = 0
//   - MI is summed over the two sources, CC and PSNR averaged
//   - FMI: per 8x8 block DCT-II magnitudes without the DC term, jointly
//     max-normalized per pair, compared with normalized MI
//   - degenerate guards: zero variance -> CC term 0; zero MSE -> PSNR
//     sentinel 999; zero feature entropy -> FMI term 0

inline constexpr double kPsnrSentinel = 999.0;

double entropy(const Image& img);
double mutual_information(const Image& fused, const Image& a, const Image& b);
double correlation_coefficient(const Image& fused, const Image& a, const Image& b,
                               bool* degenerate = nullptr);
double psnr(const Image& fused, const Image& a, const Image& b,
            bool* degenerate = nullptr);
double fmi_dct(const Image& fused, const Image& a, const Image& b,
               bool* degenerate = nullptr);

struct PairMetrics {
  std::string pair_id;
  double en = 0, mi = 0, cc = 0, psnr = 0, fmi = 0;
};

struct MetricReport {
  std::vector<PairMetrics> pairs;
  std::vector<std::pair<std::string, std::string>> skipped;  // id, reason
  std::vector<std::string> flags;                            // degenerate-case notes
  std::string dataset, checkpoint_id, timestamp;

  PairMetrics mean() const;
  PairMetrics stddev() const;  // population
  // header `pair,en,mi,cc,psnr,fmi`, one row per pair, `mean` / `std`
  // footer rows; full float precision
  std::string to_csv() const;
  std::string metadata_json() const;
};

PairMetrics compute_pair_metrics(const std::string& id, const Image& fused,
                                 const Image& a, const Image& b,
                                 std::vector<std::string>* flags = nullptr);

// Runs `fuse` over the pairs (sorted by id) and aggregates. Pairs whose
// fusion throws are recorded as skipped, not dropped silently.
MetricReport evaluate_set(const std::vector<ImagePair>& pairs,
                          const std::function<Image(const ImagePair&)>& fuse);

void write_report(const MetricReport& report, const std::string& csv_path);

}  // namespace wdualmine::metrics
