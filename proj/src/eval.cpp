#include "eval.hpp"

#include "csv.hpp"
#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace yieldcast {

MetricReport compute_metrics(const std::vector<double>& observed, const std::vector<double>& predicted) {
    if (observed.size() != predicted.size())
        throw ValidationError("observed and predicted differ in length");
    if (observed.size() < 2) throw ValidationError("metrics need at least two groups");
    const double n = static_cast<double>(observed.size());
    double ybar = 0.0, pbar = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        ybar += observed[i];
        pbar += predicted[i];
    }
    ybar /= n;
    pbar /= n;
    double sse = 0.0, sst = 0.0, sae = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double e = observed[i] - predicted[i];
        sse += e * e;
        sae += std::abs(e);
        sst += (observed[i] - ybar) * (observed[i] - ybar);
    }
    if (!(sst > 0.0)) throw ValidationError("constant observations: R-squared is undefined");
    MetricReport r;
    r.r2 = 1.0 - sse / sst;
    r.mspe = sse / n;
    r.mape = sae / n;
    r.predicted_average = pbar;
    r.n = observed.size();
    return r;
}

std::vector<MetricReport> sort_reports(std::vector<MetricReport> reports) {
    std::stable_sort(reports.begin(), reports.end(), [](const MetricReport& a, const MetricReport& b) {
        if (a.n_groups != b.n_groups) return a.n_groups < b.n_groups;
        return a.method.compare(b.method) > 0;  // "clustering" rows before "blocking" rows
    });
    return reports;
}

std::string format_percent(double fraction) {
    std::string s = csv::format_fixed(100.0 * fraction, 3);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    if (s == "-0") s = "0";
    return s;
}

std::string format_metric(double v) { return csv::format_fixed(v, 3); }

namespace {

std::vector<std::vector<std::string>> rows_of(const std::vector<MetricReport>& reports, bool include_epsilon) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Aggregation Method", "Forecasting Model", "# Clusters"};
    if (include_epsilon) header.push_back("epsilon");
    for (const char* h : {"R2 (%)", "MSPE", "MAPE", "Predicted Average"}) header.emplace_back(h);
    if (include_epsilon) header.emplace_back("Flags");
    rows.push_back(header);
    for (const auto& r : sort_reports(reports)) {
        std::string method = r.method;
        if (!method.empty()) method[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(method[0])));
        std::vector<std::string> row{method, r.model, std::to_string(r.n_groups)};
        if (include_epsilon) row.push_back(r.epsilon);
        row.push_back(format_percent(r.r2));
        row.push_back(format_metric(r.mspe));
        row.push_back(format_metric(r.mape));
        row.push_back(format_metric(r.predicted_average));
        if (include_epsilon) row.push_back(r.flags);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

std::string comparison_table(const std::vector<MetricReport>& reports, bool include_epsilon) {
    const auto rows = rows_of(reports, include_epsilon);
    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::ostringstream out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            if (c) out << "  ";
            out << std::left << std::setw(static_cast<int>(width[c])) << rows[r][c];
        }
        out << "\n";
        if (r == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w + 2;
            out << std::string(total - 2, '-') << "\n";
        }
    }
    return out.str();
}

std::string comparison_csv(const std::vector<MetricReport>& reports, bool include_epsilon) {
    std::string out = include_epsilon ? "method,model,n_groups,epsilon,r2,mspe,mape,predicted_average,flags\n"
                                      : "method,model,n_groups,r2,mspe,mape,predicted_average\n";
    for (const auto& r : sort_reports(reports)) {
        out += r.method + "," + r.model + "," + std::to_string(r.n_groups) + ",";
        if (include_epsilon) out += r.epsilon + ",";
        out += csv::format(r.r2) + "," + csv::format(r.mspe) + "," + csv::format(r.mape) + "," +
               csv::format(r.predicted_average);
        if (include_epsilon) out += "," + r.flags;
        out += "\n";
    }
    return out;
}

}  // namespace yieldcast
