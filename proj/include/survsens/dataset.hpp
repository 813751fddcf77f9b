#pragma once

// Data model and CSV ingestion for right-censored survival and
// competing-risks samples. A Dataset is immutable after construction and
// safe to share across threads.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "survsens/normal.hpp"

namespace survsens {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One subject: follow-up time, event indicator, failure type (0 when
// censored, 1..m otherwise), binary treatment, covariate vector.
struct SurvivalRecord {
    double time = 0.0;
    int status = 0;
    int cause = 0;
    int treat = 0;
    Eigen::VectorXd covariates;
};

struct Dataset {
    std::vector<SurvivalRecord> records;
    std::vector<std::string> covariate_names;
    int n_causes = 1;

    int n() const { return static_cast<int>(records.size()); }
    int p() const { return static_cast<int>(covariate_names.size()); }

    Eigen::MatrixXd covariate_matrix() const {
        Eigen::MatrixXd x(n(), p());
        for (int i = 0; i < n(); ++i) x.row(i) = records[i].covariates.transpose();
        return x;
    }
    Eigen::VectorXd time_vector() const {
        Eigen::VectorXd t(n());
        for (int i = 0; i < n(); ++i) t[i] = records[i].time;
        return t;
    }
    Eigen::VectorXi treat_vector() const {
        Eigen::VectorXi z(n());
        for (int i = 0; i < n(); ++i) z[i] = records[i].treat;
        return z;
    }
};

namespace detail {

inline std::string row_msg(int row, const std::string& what) {
    return "row " + std::to_string(row) + ": " + what;
}

} // namespace detail

// Validates the full record set: positive finite times, status/cause
// consistency, contiguous cause codes 1..m each observed at least once,
// fixed covariate length, no missing values.
inline void validate_dataset(const Dataset& data) {
    if (data.n() < 2) throw error("dataset must contain at least 2 records");
    if (data.n_causes < 1) throw error("dataset must declare at least one cause");
    const int p = data.p();
    std::vector<int> cause_counts(data.n_causes + 1, 0);
    for (int i = 0; i < data.n(); ++i) {
        const SurvivalRecord& r = data.records[i];
        if (!(r.time > 0.0) || !std::isfinite(r.time))
            throw error(detail::row_msg(i, "time > 0 violated"));
        if (r.status != 0 && r.status != 1)
            throw error(detail::row_msg(i, "status must be 0 or 1"));
        if (r.treat != 0 && r.treat != 1)
            throw error(detail::row_msg(i, "treat must be 0 or 1"));
        if ((r.cause == 0) != (r.status == 0))
            throw error(detail::row_msg(i, "cause = 0 exactly when status = 0"));
        if (r.cause < 0 || r.cause > data.n_causes)
            throw error(detail::row_msg(i, "cause outside 0.." + std::to_string(data.n_causes)));
        if (r.covariates.size() != p)
            throw error(detail::row_msg(i, "covariate length mismatch"));
        for (int k = 0; k < p; ++k) {
            if (!std::isfinite(r.covariates[k]))
                throw error(detail::row_msg(i, "non-finite covariate " + data.covariate_names[k]));
        }
        ++cause_counts[r.cause];
    }
    for (int j = 1; j <= data.n_causes; ++j) {
        if (cause_counts[j] == 0)
            throw error("no record with cause " + std::to_string(j) +
                        "; cause codes must be contiguous 1..m");
    }
}

inline Dataset make_dataset(std::vector<SurvivalRecord> records,
                            std::vector<std::string> covariate_names,
                            int n_causes) {
    Dataset data;
    data.records = std::move(records);
    data.covariate_names = std::move(covariate_names);
    data.n_causes = n_causes;
    validate_dataset(data);
    return data;
}

// Column-name mapping for load_csv. An empty covariate list means "every
// column not otherwise mapped, in header order". The cause column is
// optional in the file; when absent m = 1 and cause := status.
struct CsvSchema {
    std::string time = "time";
    std::string status = "status";
    std::string treat = "treat";
    std::string cause = "cause";
    std::vector<std::string> covariates;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& cell, int row, const std::string& col) {
    if (cell.empty()) throw error(row_msg(row, "empty cell in column " + col));
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0')
        throw error(row_msg(row, "non-numeric cell '" + cell + "' in column " + col));
    return v;
}

inline int parse_int(const std::string& cell, int row, const std::string& col) {
    const double v = parse_double(cell, row, col);
    const double r = std::nearbyint(v);
    if (!std::isfinite(v) || v != r)
        throw error(row_msg(row, "column " + col + " must be an integer, got '" + cell + "'"));
    return static_cast<int>(r);
}

} // namespace detail

inline Dataset load_csv(const std::string& path, const CsvSchema& schema = CsvSchema{}) {
    std::ifstream in(path);
    if (!in) throw error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw error(path + ": empty file");
    const std::vector<std::string> header = detail::split_csv_line(line);

    auto find_col = [&](const std::string& name) {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return static_cast<int>(k);
        return -1;
    };
    const int c_time = find_col(schema.time);
    const int c_status = find_col(schema.status);
    const int c_treat = find_col(schema.treat);
    const int c_cause = find_col(schema.cause);
    if (c_time < 0) throw error(path + ": missing column " + schema.time);
    if (c_status < 0) throw error(path + ": missing column " + schema.status);
    if (c_treat < 0) throw error(path + ": missing column " + schema.treat);

    std::vector<std::string> cov_names = schema.covariates;
    std::vector<int> cov_cols;
    if (cov_names.empty()) {
        for (std::size_t k = 0; k < header.size(); ++k) {
            const int ki = static_cast<int>(k);
            if (ki == c_time || ki == c_status || ki == c_treat || ki == c_cause) continue;
            cov_names.push_back(header[k]);
            cov_cols.push_back(ki);
        }
    } else {
        for (const std::string& name : cov_names) {
            const int k = find_col(name);
            if (k < 0) throw error(path + ": missing covariate column " + name);
            cov_cols.push_back(k);
        }
    }
    const int p = static_cast<int>(cov_cols.size());

    std::vector<SurvivalRecord> records;
    int row = 0;
    int max_cause = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw error(detail::row_msg(row, "expected " + std::to_string(header.size()) +
                                        " cells, got " + std::to_string(cells.size())));
        SurvivalRecord r;
        r.time = detail::parse_double(cells[c_time], row, schema.time);
        r.status = detail::parse_int(cells[c_status], row, schema.status);
        r.treat = detail::parse_int(cells[c_treat], row, schema.treat);
        r.cause = (c_cause >= 0) ? detail::parse_int(cells[c_cause], row, schema.cause)
                                 : r.status;
        r.covariates.resize(p);
        for (int k = 0; k < p; ++k)
            r.covariates[k] = detail::parse_double(cells[cov_cols[k]], row, cov_names[k]);
        max_cause = std::max(max_cause, r.cause);
        records.push_back(std::move(r));
        ++row;
    }
    return make_dataset(std::move(records), std::move(cov_names), std::max(1, max_cause));
}

// Writes a Dataset back out with round-trip-exact float formatting.
inline void save_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw error("cannot write " + path);
    out << "time,status,cause,treat";
    for (const std::string& name : data.covariate_names) out << ',' << name;
    out << '\n';
    char buf[40];
    for (const SurvivalRecord& r : data.records) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.time);
        out << buf << ',' << r.status << ',' << r.cause << ',' << r.treat;
        for (int k = 0; k < r.covariates.size(); ++k) {
            std::snprintf(buf, sizeof(buf), "%.17g", r.covariates[k]);
            out << ',' << buf;
        }
        out << '\n';
    }
}

// Elementwise standard-normal quantile of propensity scores, the usual
// single-covariate reduction before fitting the treatment model.
inline Eigen::VectorXd transform_ps_covariate(const Eigen::VectorXd& ps) {
    Eigen::VectorXd out(ps.size());
    for (int i = 0; i < ps.size(); ++i) {
        if (!(ps[i] > 0.0 && ps[i] < 1.0))
            throw error("propensity score at index " + std::to_string(i) +
                        " must lie strictly in (0,1)");
        out[i] = norm_quantile(ps[i]);
    }
    return out;
}

} // namespace survsens
