#pragma once

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "cmcrl/cluster.hpp"
#include "cmcrl/common.hpp"
#include "cmcrl/image_io.hpp"
#include "cmcrl/metrics.hpp"
#include "cmcrl/train.hpp"

namespace cmcrl {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  return out;
}

inline void write_epoch_csv(const std::vector<EpochRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "epoch,m,n_clustered,loss,cacc,ari,wall_time_s\n";
  for (const auto& r : rows)
    out << r.epoch << "," << r.m << "," << r.n_clustered << "," << format_double(r.mean_loss)
        << "," << format_double(r.cacc) << "," << format_double(r.ari) << ","
        << format_double(r.wall_time_s) << "\n";
}

inline void write_finetune_csv(const std::vector<FinetuneRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "epoch,loss,train_acc\n";
  for (const auto& r : rows)
    out << r.epoch << "," << format_double(r.mean_loss) << "," << format_double(r.train_acc)
        << "\n";
}

/// metrics.csv (metric,value rows), metrics.json (flat object) and
/// confusion.csv under the given directory.
inline void write_metrics_files(const MetricsReport& report,
                                const std::vector<std::string>& class_names,
                                const std::string& dir) {
  {
    auto out = open_out(dir + "/metrics.csv");
    out << "metric,value\n";
    out << "acc," << format_double(report.acc) << "\n";
    out << "recall," << format_double(report.recall) << "\n";
    out << "precision," << format_double(report.precision) << "\n";
    out << "f1," << format_double(report.f1) << "\n";
    out << "cacc," << format_double(report.cacc) << "\n";
    out << "ari," << format_double(report.ari) << "\n";
  }
  {
    auto out = open_out(dir + "/metrics.json");
    out << "{\n";
    out << "  \"acc\": " << format_double(report.acc) << ",\n";
    out << "  \"recall\": " << format_double(report.recall) << ",\n";
    out << "  \"precision\": " << format_double(report.precision) << ",\n";
    out << "  \"f1\": " << format_double(report.f1) << ",\n";
    out << "  \"cacc\": " << format_double(report.cacc) << ",\n";
    out << "  \"ari\": " << format_double(report.ari) << "\n";
    out << "}\n";
  }
  if (!report.confusion.empty()) {
    auto out = open_out(dir + "/confusion.csv");
    out << "true_class";
    for (const auto& n : class_names) out << ",pred_" << n;
    out << "\n";
    const std::size_t k = report.confusion.dim(0);
    for (std::size_t q = 0; q < k; ++q) {
      out << class_names[q];
      for (std::size_t j = 0; j < k; ++j) out << "," << report.confusion.at(q, j);
      out << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Cluster composition report
// ---------------------------------------------------------------------------

struct ClusterReportRow {
  int cluster_id = 0;
  std::size_t size = 0;
  int majority_class = 0;
  std::string majority_class_name;
  double purity = 0.0;
};

inline std::vector<ClusterReportRow> cluster_report_rows(const ClusterAssignment& assign,
                                                         const std::vector<int>& true_labels,
                                                         const std::vector<std::string>& class_names) {
  std::vector<ClusterReportRow> rows;
  for (int j = 1; j <= assign.num_clusters; ++j) {
    const auto& members = assign.members[static_cast<std::size_t>(j - 1)];
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (auto i : members) counts[static_cast<std::size_t>(true_labels[i] - 1)]++;
    const auto best =
        static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    ClusterReportRow r;
    r.cluster_id = j;
    r.size = members.size();
    r.majority_class = static_cast<int>(best) + 1;
    r.majority_class_name = class_names[best];
    r.purity = members.empty() ? 0.0
                               : static_cast<double>(counts[best]) / static_cast<double>(members.size());
    rows.push_back(r);
  }
  return rows;
}

inline void write_cluster_report_csv(const std::vector<ClusterReportRow>& rows,
                                     const std::string& path) {
  auto out = open_out(path);
  out << "cluster_id,size,majority_class,majority_class_name,purity\n";
  for (const auto& r : rows)
    out << r.cluster_id << "," << r.size << "," << r.majority_class << ","
        << r.majority_class_name << "," << format_double(r.purity) << "\n";
}

/// Stacked bar chart of per-cluster class composition.
inline void write_cluster_chart(const ClusterAssignment& assign,
                                const std::vector<int>& true_labels, std::size_t num_classes,
                                const std::string& path) {
  const int m = std::max(assign.num_clusters, 1);
  const int bar_w = 28, gap = 8, chart_h = 240, margin = 24;
  const int width = margin * 2 + m * (bar_w + gap);
  const int height = chart_h + margin * 2;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));

  std::size_t largest = 1;
  for (const auto& members : assign.members) largest = std::max(largest, members.size());

  std::vector<cv::Scalar> palette;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double hue = 180.0 * static_cast<double>(c) / static_cast<double>(num_classes);
    cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(hue, 200, 220)), bgr;
    cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
    const auto px = bgr.at<cv::Vec3b>(0, 0);
    palette.emplace_back(px[0], px[1], px[2]);
  }

  for (int j = 1; j <= assign.num_clusters; ++j) {
    const auto& members = assign.members[static_cast<std::size_t>(j - 1)];
    std::vector<std::size_t> counts(num_classes, 0);
    for (auto i : members) counts[static_cast<std::size_t>(true_labels[i] - 1)]++;
    const int x0 = margin + (j - 1) * (bar_w + gap);
    int y = height - margin;
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (counts[c] == 0) continue;
      const int seg = static_cast<int>(
          std::lround(static_cast<double>(counts[c]) / static_cast<double>(largest) * chart_h));
      cv::rectangle(canvas, cv::Point(x0, y - seg), cv::Point(x0 + bar_w, y), palette[c],
                    cv::FILLED);
      y -= seg;
    }
    cv::putText(canvas, std::to_string(j), cv::Point(x0 + 4, height - margin + 16),
                cv::FONT_HERSHEY_SIMPLEX, 0.35, cv::Scalar(0, 0, 0), 1);
  }
  if (!cv::imwrite(path, canvas)) throw io_error("failed to write chart: " + path);
}

}  // namespace cmcrl
