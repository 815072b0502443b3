// io.hpp: text formats: result CSV (`step,time,prob,escape,stderr`), trial
// records (`trial_id,first_bright_step`, 0 = censored) and JSON sidecars.

#pragma once

#include "qfpt/common.hpp"
#include "qfpt/fpt_engine.hpp"
#include "qfpt/pulse_table.hpp"

#include "json.hpp"

#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

namespace qfpt {

using json = nlohmann::ordered_json;

// `stderr_override`, when non-empty, replaces the binomial standard errors.
inline std::string result_csv(const FptdResult& r, const std::vector<double>& stderr_override = {}) {
    const auto se = stderr_override.empty() ? r.stderrs() : stderr_override;
    const auto esc = r.escape.size() == r.probs.size() ? r.escape : escape_probability(r);
    std::ostringstream out;
    out << "step,time,prob,escape,stderr\n";
    for (std::size_t i = 0; i < r.probs.size(); ++i) {
        out << (i + 1) << ',' << format_double(r.time(i)) << ',' << format_double(r.probs[i]) << ','
            << format_double(esc[i]) << ',' << format_double(se.at(i)) << '\n';
    }
    return out.str();
}

struct ParsedResultCsv {
    std::vector<int> steps;
    std::vector<double> time, prob, escape, stderr_col;
};

inline ParsedResultCsv parse_result_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "step,time,prob,escape,stderr")
        throw ConfigError("result csv: missing header 'step,time,prob,escape,stderr'");
    ParsedResultCsv out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        const std::string ctx = "result csv:" + std::to_string(lineno);
        if (cells.size() != 5) throw ConfigError(ctx + ": expected 5 columns");
        out.steps.push_back(static_cast<int>(parse_double(cells[0], ctx)));
        out.time.push_back(parse_double(cells[1], ctx));
        out.prob.push_back(parse_double(cells[2], ctx));
        out.escape.push_back(parse_double(cells[3], ctx));
        out.stderr_col.push_back(parse_double(cells[4], ctx));
    }
    return out;
}

inline std::vector<int> read_trial_records(std::istream& in, const std::string& name = "trials csv") {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(name + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "trial_id,first_bright_step") throw ConfigError(name + ": missing header 'trial_id,first_bright_step'");
    std::vector<int> steps;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        const std::string ctx = name + ":" + std::to_string(lineno);
        if (comma == std::string::npos) throw ConfigError(ctx + ": expected two columns");
        const double step = parse_double(std::string_view(line).substr(comma + 1), ctx);
        if (step < 0 || step != static_cast<int>(step)) throw ConfigError(ctx + ": step must be a nonnegative integer");
        steps.push_back(static_cast<int>(step));
    }
    if (steps.empty()) throw ConfigError(name + ": no trial records");
    return steps;
}

inline std::vector<int> read_trial_records_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("trials csv not found: " + path);
    return read_trial_records(in, path);
}

inline std::string trial_records_csv(const std::vector<int>& first_bright) {
    std::ostringstream out;
    out << "trial_id,first_bright_step\n";
    for (std::size_t i = 0; i < first_bright.size(); ++i) out << i << ',' << first_bright[i] << '\n';
    return out.str();
}

inline json moments_json(const Moments& m) {
    return json{{"mean", m.mean},
                {"second_moment", m.second_moment},
                {"censored_fraction", m.censored_fraction},
                {"censoring_warning", m.censoring_warning},
                {"policy", "detected mass only, no imputation"}};
}

inline json tail_json(const TailFit& t) {
    return json{{"beta", t.beta}, {"t_min", t.t_min}, {"t_max", t.t_max},
                {"r_squared", t.r_squared}, {"log_amplitude", t.log_amplitude}, {"points", t.points}};
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

}  // namespace qfpt
