#include "contdt/metrics/metrics.hpp"

#include <json.hpp>
#include <sstream>

#include "contdt/errors.hpp"

namespace contdt {

PerformanceMatrix::PerformanceMatrix(int n_tasks) {
    if (n_tasks < 1) throw MetricError("performance matrix needs at least one task");
    const auto n = static_cast<std::size_t>(n_tasks);
    a.assign(n, std::vector<std::optional<double>>(n));
    b_bar.assign(n, std::nullopt);
    teacher.assign(n, std::nullopt);
}

void PerformanceMatrix::set_row(int i, const std::vector<double>& row) {
    if (i < 0 || i >= size()) throw MetricError("row index out of range");
    if (static_cast<int>(row.size()) != size()) throw MetricError("row length must equal the task count");
    for (std::size_t j = 0; j < row.size(); ++j) a[static_cast<std::size_t>(i)][j] = row[j];
}

double PerformanceMatrix::at(int i, int j) const {
    if (i < 0 || j < 0 || i >= size() || j >= size()) throw MetricError("matrix index out of range");
    const auto& v = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    if (!v) throw MetricError("missing entry a[" + std::to_string(i) + "][" + std::to_string(j) + "]");
    return *v;
}

bool PerformanceMatrix::complete() const {
    for (const auto& row : a)
        for (const auto& v : row)
            if (!v) return false;
    return true;
}

double per(const PerformanceMatrix& m) {
    const int n = m.size();
    if (n < 1) throw MetricError("PER needs at least one task");
    double s = 0;
    for (int j = 0; j < n; ++j) s += m.at(n - 1, j);
    return s / n;
}

double bwt(const PerformanceMatrix& m) {
    const int n = m.size();
    if (n < 2) throw MetricError("BWT is undefined for fewer than two tasks");
    double s = 0;
    for (int j = 0; j < n - 1; ++j) s += m.at(j, j) - m.at(n - 1, j);
    return s / (n - 1);
}

double fwt(const PerformanceMatrix& m) {
    const int n = m.size();
    if (n < 2) throw MetricError("FWT is undefined for fewer than two tasks");
    double s = 0;
    for (int j = 1; j < n; ++j) {
        const auto& b = m.b_bar[static_cast<std::size_t>(j)];
        if (!b) throw MetricError("missing random-init return for task " + std::to_string(j));
        s += m.at(j - 1, j) - *b;
    }
    return s / (n - 1);
}

double dg(const PerformanceMatrix& m) {
    const int n = m.size();
    if (n < 1) throw MetricError("DG needs at least one task");
    double s = 0;
    for (int j = 0; j < n; ++j) {
        const auto& t = m.teacher[static_cast<std::size_t>(j)];
        if (!t) throw MetricError("missing teacher return for task " + std::to_string(j));
        s += *t - m.at(j, j);
    }
    return s / n;
}

namespace {

template <class F>
std::optional<double> defined(F&& f) {
    try {
        return f();
    } catch (const MetricError&) {
        return std::nullopt;
    }
}

}  // namespace

MetricSummary summarize(const PerformanceMatrix& m) {
    return {defined([&] { return per(m); }), defined([&] { return bwt(m); }), defined([&] { return fwt(m); }),
            defined([&] { return dg(m); })};
}

std::string metrics_json(const std::string& method, unsigned long long seed, const MetricSummary& s) {
    auto value = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::ordered_json j;
    j["method"] = method;
    j["seed"] = seed;
    j["PER"] = value(s.per);
    j["BWT"] = value(s.bwt);
    j["FWT"] = value(s.fwt);
    j["DG"] = value(s.dg);
    return j.dump();
}

std::string matrix_csv(const PerformanceMatrix& m) {
    std::ostringstream out;
    out.precision(17);
    auto cell = [&](const std::optional<double>& v) {
        if (v) out << *v;
    };
    out << "row";
    for (int j = 0; j < m.size(); ++j) out << ",task" << j;
    out << "\n";
    for (int i = 0; i < m.size(); ++i) {
        out << "after_task" << i;
        for (const auto& v : m.a[static_cast<std::size_t>(i)]) {
            out << ",";
            cell(v);
        }
        out << "\n";
    }
    out << "b_bar";
    for (const auto& v : m.b_bar) {
        out << ",";
        cell(v);
    }
    out << "\nteacher";
    for (const auto& v : m.teacher) {
        out << ",";
        cell(v);
    }
    out << "\n";
    return out.str();
}

}  // namespace contdt
