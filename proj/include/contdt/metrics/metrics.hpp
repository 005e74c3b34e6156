#pragma once

#include <optional>
#include <string>
#include <vector>

namespace contdt {

/// a[i][j]: mean return on task j after training finished on task i.
/// Tasks are 0-based here; the formulas below are written for that.
struct PerformanceMatrix {
    std::vector<std::vector<std::optional<double>>> a;
    std::vector<std::optional<double>> b_bar;    // random-init return per task
    std::vector<std::optional<double>> teacher;  // teacher return per task, when teachers exist

    PerformanceMatrix() = default;
    explicit PerformanceMatrix(int n_tasks);

    [[nodiscard]] int size() const { return static_cast<int>(a.size()); }
    void set_row(int i, const std::vector<double>& row);
    /// Entry, or MetricError when missing.
    [[nodiscard]] double at(int i, int j) const;
    [[nodiscard]] bool complete() const;
};

/// Mean of the last row.
double per(const PerformanceMatrix& m);
/// mean_{n < N-1} a[n][n] - a[N-1][n]; lower is better.
double bwt(const PerformanceMatrix& m);
/// mean_{n >= 1} a[n-1][n] - b_bar[n].
double fwt(const PerformanceMatrix& m);
/// mean_n teacher[n] - a[n][n].
double dg(const PerformanceMatrix& m);

struct MetricSummary {
    std::optional<double> per, bwt, fwt, dg;
};

/// Every metric that is defined for the matrix; undefined ones stay empty.
MetricSummary summarize(const PerformanceMatrix& m);

/// {"method", "seed", "PER", "BWT", "FWT", "DG"} with null for undefined metrics.
std::string metrics_json(const std::string& method, unsigned long long seed, const MetricSummary& s);

/// Header "row,task0,...", one line per row, then b_bar and teacher rows.
std::string matrix_csv(const PerformanceMatrix& m);

}  // namespace contdt
