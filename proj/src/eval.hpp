#pragma once

#include <string>
#include <vector>

namespace yieldcast {

struct MetricReport {
    double r2 = 0.0;    // fraction; tables show it as a percentage
    double mspe = 0.0;  // (Mg/Ha)^2
    double mape = 0.0;  // mean absolute error, Mg/Ha
    double predicted_average = 0.0;
    std::size_t n = 0;

    std::string method;  // aggregation method
    std::string model = "SVAR";
    std::size_t n_groups = 0;
    std::string epsilon;
    std::string flags;
};

MetricReport compute_metrics(const std::vector<double>& observed, const std::vector<double>& predicted);

/// Rows ordered by (group count, aggregation method).
std::vector<MetricReport> sort_reports(std::vector<MetricReport> reports);

/// Plain-text comparison table: method, model, #groups, R2 (%), MSPE, MAPE, predicted average.
std::string comparison_table(const std::vector<MetricReport>& reports, bool include_epsilon = false);
std::string comparison_csv(const std::vector<MetricReport>& reports, bool include_epsilon = false);

/// Table cell formatting: R2 as a percentage trimmed to at most three decimals, the rest to three.
std::string format_percent(double fraction);
std::string format_metric(double v);

}  // namespace yieldcast
