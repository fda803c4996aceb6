#include "malbench/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "malbench/common.hpp"

namespace malbench {

namespace {

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !cell.empty()) {
                row.push_back(std::move(cell));
                rows.push_back(std::move(row));
            }
            row.clear();
            cell.clear();
            any = false;
        } else {
            cell += c;
            any = true;
        }
    }
    if (quoted) throw Error(ErrorKind::SchemaViolation, "unterminated quoted CSV cell");
    if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

void append_cell(std::string& out, std::string_view cell) {
    if (cell.find_first_of(",\"\r\n") == std::string_view::npos) {
        out += cell;
        return;
    }
    out += '"';
    for (char c : cell) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
}

std::optional<double> optional_number(std::string_view cell) {
    cell = trim(cell);
    if (cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA") return std::nullopt;
    return parse_number(cell);
}

std::string optional_text(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

int algorithm_rank(std::string_view name) {
    static constexpr std::string_view order[] = {"DT", "RF", "LGBM", "SVM"};
    for (int i = 0; i < 4; ++i)
        if (order[i] == name) return i;
    return 4;
}

}  // namespace

std::string format_observation(const Observation& o) {
    std::string out = std::to_string(o.question);
    out += ',';
    append_cell(out, o.algorithm);
    out += ',';
    append_cell(out, o.feature_set);
    out += ',' + std::to_string(o.train_set_size) + ',' + std::to_string(o.test_set_size) + ',';
    append_cell(out, o.test_set_ratio);
    out += ',';
    append_cell(out, o.perf_measure);
    out += ',' + optional_text(o.performance) + ',' + optional_text(o.other_info) + ',' + std::to_string(o.seed);
    return out;
}

std::string observations_to_csv(const std::vector<Observation>& rows) {
    std::string out(kResultsHeader);
    out += '\n';
    for (const auto& o : rows) {
        out += format_observation(o);
        out += '\n';
    }
    return out;
}

void write_observations(const std::vector<Observation>& rows, const std::string& path) {
    write_file_atomic(path, observations_to_csv(rows));
}

std::vector<Observation> parse_observations(std::string_view text) {
    const Table table = Table::parse(text);
    const std::size_t c_question = table.column("question"), c_alg = table.column("algorithm"),
                      c_fs = table.column("feature_set"), c_train = table.column("train_set_size"),
                      c_test = table.column("test_set_size"), c_ratio = table.column("test_set_ratio"),
                      c_measure = table.column("perf_measure"), c_perf = table.column("performance");
    std::optional<std::size_t> c_other, c_seed;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (table.header[c] == "other_info") c_other = c;
        if (table.header[c] == "seed") c_seed = c;
    }
    std::vector<Observation> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.size() != table.header.size()) {
            throw Error(ErrorKind::SchemaViolation, "results row " + std::to_string(r + 1) + " has " +
                                                        std::to_string(row.size()) + " cells, expected " +
                                                        std::to_string(table.header.size()));
        }
        try {
            Observation o;
            o.question = static_cast<int>(parse_integer(row[c_question]));
            o.algorithm = row[c_alg];
            o.feature_set = row[c_fs];
            o.train_set_size = static_cast<std::uint64_t>(parse_number(row[c_train]));
            o.test_set_size = static_cast<std::uint64_t>(parse_number(row[c_test]));
            o.test_set_ratio = row[c_ratio];
            o.perf_measure = row[c_measure];
            o.performance = optional_number(row[c_perf]);
            if (c_other) o.other_info = optional_number(row[*c_other]);
            if (c_seed) o.seed = static_cast<std::uint64_t>(parse_number(row[*c_seed]));
            out.push_back(std::move(o));
        } catch (const Error& e) {
            throw Error(ErrorKind::SchemaViolation, "results row " + std::to_string(r + 1) + ": " + e.what());
        }
    }
    return out;
}

std::vector<Observation> read_observations(const std::string& path) { return parse_observations(read_file(path)); }

std::size_t Table::column(std::string_view name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == name) return c;
    throw Error(ErrorKind::MissingColumn, "column '" + std::string(name) + "' not found");
}

std::string Table::to_csv() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cells.size(); ++c) {
            if (c) out += ',';
            append_cell(out, cells[c]);
        }
        out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
}

Table Table::parse(std::string_view text) {
    auto rows = parse_csv(text);
    if (rows.empty()) throw Error(ErrorKind::Empty, "CSV has no header");
    Table t;
    t.header = std::move(rows.front());
    for (auto& h : t.header) h = std::string(trim(h));
    t.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
    return t;
}

Table read_table(const std::string& path) { return Table::parse(read_file(path)); }

Table observations_table(const std::vector<Observation>& rows) {
    return Table::parse(observations_to_csv(rows));
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw Error(ErrorKind::LengthMismatch, "pearson needs equal-length inputs");
    if (x.size() < 2) throw Error(ErrorKind::ZeroVariance, "pearson needs at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0 || syy == 0) throw Error(ErrorKind::ZeroVariance, "pearson input has zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<Correlation> correlation_table(const std::vector<Observation>& obs, int question,
                                           std::string_view perf_measure) {
    std::map<std::pair<int, std::string>, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const auto& o : obs) {
        if (o.question != question || o.perf_measure != perf_measure || !o.performance) continue;
        auto& g = groups[{algorithm_rank(o.algorithm), o.algorithm}];
        g.first.push_back(static_cast<double>(o.train_set_size));
        g.second.push_back(*o.performance);
    }
    std::vector<Correlation> out;
    for (const auto& [key, g] : groups) {
        try {
            out.push_back({key.second, pearson(g.first, g.second), g.first.size()});
        } catch (const Error& e) {
            throw Error(e.kind(), "algorithm " + key.second + ": " + e.message());
        }
    }
    return out;
}

std::vector<SensitivityPoint> oat_sensitivities(const std::vector<std::pair<double, double>>& series,
                                                DeltaMode mode) {
    std::vector<SensitivityPoint> out;
    for (std::size_t i = 1; i < series.size(); ++i) {
        const auto [prev_size, prev_perf] = series[i - 1];
        const auto [size, perf] = series[i];
        if (size != 2 * prev_size) {
            throw Error(ErrorKind::NonDoublingLevels,
                        format_number(size) + " does not double " + format_number(prev_size));
        }
        double delta = perf - prev_perf;
        if (mode == DeltaMode::Relative) {
            if (prev_perf == 0) throw Error(ErrorKind::ZeroVariance, "relative delta from zero performance");
            delta /= prev_perf;
        }
        out.push_back({prev_size, delta});
    }
    return out;
}

std::vector<SliceSensitivity> repeated_oat(const std::vector<Observation>& obs, int question,
                                           std::string_view perf_measure, DeltaMode mode) {
    using Key = std::tuple<int, std::string, std::string, std::uint64_t>;
    std::map<Key, std::map<std::uint64_t, double>> slices;
    for (const auto& o : obs) {
        if (o.question != question || o.perf_measure != perf_measure || !o.performance) continue;
        auto& series = slices[{algorithm_rank(o.algorithm), o.algorithm, o.feature_set, o.seed}];
        if (!series.emplace(o.train_set_size, *o.performance).second) {
            throw Error(ErrorKind::InvalidLevels, "duplicate size " + std::to_string(o.train_set_size) + " in slice " +
                                                      o.algorithm + "/" + o.feature_set + "/" + std::to_string(o.seed));
        }
    }
    std::vector<SliceSensitivity> out;
    for (const auto& [key, series] : slices) {
        std::vector<std::pair<double, double>> points;
        for (const auto& [size, perf] : series) points.emplace_back(static_cast<double>(size), perf);
        for (const auto& p : oat_sensitivities(points, mode)) {
            out.push_back({std::get<1>(key), std::get<2>(key), std::get<3>(key), p});
        }
    }
    return out;
}

LinearFit fit_linear(const std::vector<std::pair<double, double>>& points) {
    const double n = static_cast<double>(points.size());
    double mx = 0, my = 0;
    for (const auto& [x, y] : points) {
        mx += x;
        my += y;
    }
    if (points.empty()) throw Error(ErrorKind::DegenerateX, "no points to fit");
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (const auto& [x, y] : points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if (sxx == 0) throw Error(ErrorKind::DegenerateX, "fit needs at least two distinct x values");
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

}  // namespace malbench
