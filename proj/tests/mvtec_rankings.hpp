#pragma once

// Printed top-5 pixel-wise ROC-AUC ordering per MVTec-AD class, position 1 first.

#include <string>
#include <utility>
#include <vector>

namespace oracle {

struct PrintedRanking {
  std::string cls;
  std::vector<std::pair<std::string, double>> top5;  // position 1..5
};

inline const std::vector<PrintedRanking>& mvtec_top5() {
  static const std::vector<PrintedRanking> t = {
      {"Bottle", {{"P-NET", 99.0}, {"FCDD (U)", 97.0}, {"FCDD (SS)", 96.7}, {"AE-SS", 93.0}, {"GDR", 92.0}}},
      {"Cable", {{"FCDD (SS)", 94.1}, {"SMAI", 92.0}, {"GDR", 91.0}, {"FCDD (U)", 90.5}, {"VEVAE", 90.0}}},
      {"Capsule", {{"AE-SS", 94.0}, {"FCDD (U)", 93.0}, {"SMAI", 93.0}, {"FCDD (SS)", 92.9}, {"GDR", 92.0}}},
      {"Carpet", {{"FCDD (SS)", 98.7}, {"FCDD (U)", 96.4}, {"SMAI", 88.0}, {"AE-SS", 87.0}, {"VEVAE", 78.0}}},
      {"Grid", {{"P-NET", 98.0}, {"SMAI", 97.0}, {"GDR", 96.0}, {"FCDD (SS)", 95.2}, {"AE-SS", 94.0}}},
      {"Hazelnut", {{"VEVAE", 98.0}, {"GDR", 98.0}, {"FCDD (SS)", 97.1}, {"SMAI", 97.0}, {"P-NET", 97.0}}},
      {"Leather", {{"FCDD (SS)", 98.7}, {"FCDD (U)", 98.4}, {"VEVAE", 95.0}, {"GDR", 93.0}, {"P-NET", 89.0}}},
      {"Metal nut", {{"FCDD (SS)", 97.5}, {"VEVAE", 94.0}, {"FCDD (U)", 94.0}, {"SMAI", 92.0}, {"GDR", 91.0}}},
      {"Pill", {{"FCDD (SS)", 96.8}, {"GDR", 93.0}, {"SMAI", 92.0}, {"P-NET", 91.0}, {"AE-SS", 91.0}}},
      {"Screw", {{"P-NET", 100.0}, {"VEVAE", 97.0}, {"SMAI", 96.0}, {"AE-SS", 96.0}, {"AE-L2", 96.0}}},
      {"Tile", {{"FCDD (SS)", 98.5}, {"P-NET", 97.0}, {"CNNFD", 93.0}, {"FCDD (U)", 91.4}, {"VEVAE", 80.0}}},
      {"Toothbrush", {{"P-NET", 99.0}, {"GDR", 99.0}, {"SMAI", 96.0}, {"FCDD (SS)", 94.7}, {"VEVAE", 94.0}}},
      {"Transistor", {{"VEVAE", 93.0}, {"GDR", 92.0}, {"FCDD (SS)", 91.3}, {"AE-SS", 90.0}, {"FCDD (U)", 87.6}}},
      {"Wood", {{"P-NET", 98.0}, {"FCDD (SS)", 92.0}, {"CNNFD", 91.0}, {"FCDD (U)", 86.9}, {"GDR", 84.0}}},
      {"Zipper", {{"FCDD (SS)", 98.1}, {"FCDD (U)", 92.2}, {"SMAI", 90.0}, {"P-NET", 90.0}, {"AE-SS", 88.0}}},
  };
  return t;
}

/// Expected fractional rank of the method at 1-based `position`: the mean position
/// of every printed entry sharing its score.
inline double expected_rank(const PrintedRanking& r, int position) {
  const double score = r.top5[std::size_t(position - 1)].second;
  double sum = 0;
  int n = 0;
  for (int p = 1; p <= 5; ++p)
    if (r.top5[std::size_t(p - 1)].second == score) sum += p, ++n;
  return sum / n;
}

}  // namespace oracle
