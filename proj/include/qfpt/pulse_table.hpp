// pulse_table.hpp: plain-text pulse tables and the reference step-pulse set.
//
// Format (UTF-8, one sequence per data line, '#' starts a comment):
//
//   eta 0.05533
//   # N_B M_P | phases [pi] | durations [2pi/Omega00]
//   2 9 | 0.867 0.725 ... | 4 4 3.904 ...
//
// Numbers are written in shortest round-trip form, so write -> read -> write
// reproduces the text byte for byte.

#pragma once

#include "qfpt/common.hpp"
#include "qfpt/step_gate.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace qfpt {

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view tok, const std::string& context) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
        throw ConfigError(context + ": cannot parse number '" + std::string(tok) + "'");
    return v;
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

}  // namespace detail

inline std::string write_pulse_table(const std::vector<PulseSequence>& seqs) {
    std::ostringstream out;
    const double eta = seqs.empty() ? SidebandParams{}.eta : seqs.front().sideband.eta;
    out << "eta " << format_double(eta) << "\n";
    out << "# N_B M_P | phases [pi] | durations [2pi/Omega00]\n";
    for (const auto& s : seqs) {
        if (s.sideband.eta != eta) throw std::invalid_argument("write_pulse_table: mixed eta values");
        out << s.n_b_target << ' ' << s.size() << " |";
        for (double p : s.phases_pi) out << ' ' << format_double(p);
        out << " |";
        for (double d : s.durations) out << ' ' << format_double(d);
        out << "\n";
    }
    return out.str();
}

inline std::vector<PulseSequence> read_pulse_table(std::istream& in, const std::string& name = "pulse table") {
    std::vector<PulseSequence> seqs;
    SidebandParams sb;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string ctx = name + ":" + std::to_string(lineno);
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto parts = detail::split_ws(line);
        if (parts.empty()) continue;
        if (parts[0] == "eta") {
            if (parts.size() != 2) throw ConfigError(ctx + ": expected 'eta <value>'");
            sb.eta = parse_double(parts[1], ctx);
            continue;
        }
        std::vector<std::vector<std::string>> fields(1);
        for (auto& p : parts) {
            if (p == "|") fields.emplace_back();
            else fields.back().push_back(p);
        }
        if (fields.size() != 3 || fields[0].size() != 2)
            throw ConfigError(ctx + ": expected 'N_B M_P | phases | durations'");
        PulseSequence s;
        s.n_b_target = static_cast<int>(parse_double(fields[0][0], ctx));
        const auto mp = static_cast<std::size_t>(parse_double(fields[0][1], ctx));
        for (auto& t : fields[1]) s.phases_pi.push_back(parse_double(t, ctx));
        for (auto& t : fields[2]) s.durations.push_back(parse_double(t, ctx));
        if (s.phases_pi.size() != mp || s.durations.size() != mp)
            throw ConfigError(ctx + ": M_P does not match the number of phases/durations");
        s.sideband = sb;
        try {
            s.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(ctx + ": " + e.what());
        }
        seqs.push_back(std::move(s));
    }
    return seqs;
}

inline std::vector<PulseSequence> read_pulse_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("pulse table not found: " + path);
    return read_pulse_table(in, path);
}

// Reference composite step pulses (eta = 0.05533), grouped by N_B.
inline std::vector<PulseSequence> reference_pulse_table() {
    const SidebandParams sb{0.05533, 2.0 * kPi * 300e3};
    auto make = [&](int nb, std::vector<double> ph, std::vector<double> du) {
        return PulseSequence{nb, std::move(ph), std::move(du), sb};
    };
    return {
        make(2, {0.867, 0.725, 0.791, 0.960, 0.325, 0.391, 1.870, 1.370, 1.264},
             {4.000, 4.000, 3.904, 4.000, 4.000, 4.000, 3.720, 4.000, 4.000}),
        make(2, {1.013, 1.125, 1.028, 0.637, 0.888, 0.397, 0.086, 1.854, 1.664, 1.433},
             {4.000, 4.000, 4.000, 4.000, 4.000, 1.542, 4.000, 3.334, 4.000, 3.149}),
        make(2, {1.715, 1.333, 1.520, 1.477, 1.045, 1.152, 0.740, 0.922, 0.763, 0.398, 0.696},
             {3.987, 3.874, 3.394, 3.338, 3.786, 3.568, 3.999, 2.575, 3.862, 4.000, 3.999}),
        make(3, {1.588, 1.663, 0.000, 1.622, 1.755, 1.508, 1.714, 1.562},
             {6.000, 6.000, 6.000, 4.829, 2.653, 4.479, 5.400, 4.097}),
        make(3, {1.107, 0.927, 1.108, 0.986, 1.161, 0.857, 1.136, 1.042, 0.981},
             {4.055, 5.448, 4.218, 3.791, 4.513, 4.907, 4.983, 5.466, 2.659}),
        make(3, {1.107, 0.875, 1.321, 1.562, 0.098, 0.302, 1.974, 0.340, 0.720, 1.359},
             {3.677, 5.311, 6.000, 3.712, 6.000, 5.992, 4.828, 5.114, 3.760, 3.498}),
        make(4, {1.640, 0.006, 1.952, 1.921, 1.784, 1.897, 1.902, 1.982, 1.693, 0.000},
             {2.365, 4.099, 4.716, 1.680, 3.983, 5.863, 4.654, 4.994, 4.455, 5.243}),
        make(4, {2.000, 1.841, 1.895, 1.771, 0.000, 0.428, 0.225, 0.581, 0.322, 0.203, 0.166},
             {1.656, 5.097, 5.998, 6.000, 6.000, 5.008, 2.548, 5.621, 4.105, 6.000, 6.000}),
        make(4, {1.147, 1.463, 1.757, 0.001, 0.634, 0.750, 0.401, 2.000, 0.036, 1.037, 0.407, 0.306, 0.562, 0.539},
             {5.830, 5.999, 5.643, 3.863, 5.829, 5.114, 3.353, 5.205, 5.755, 0.127, 3.499, 3.799, 5.216, 4.155}),
    };
}

}  // namespace qfpt
