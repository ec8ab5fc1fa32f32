#include "robermix/timeseries.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "robermix/errors.hpp"

namespace robermix {

double TimeSeries::dt() const {
    if (times.size() < 2) throw RangeError("series too short to have a sampling interval");
    return times[1] - times[0];
}

TimeSeries TimeSeries::slice(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > length()) throw RangeError("invalid slice bounds");
    TimeSeries out;
    out.channel_names = channel_names;
    out.times.assign(times.begin() + static_cast<std::ptrdiff_t>(begin),
                     times.begin() + static_cast<std::ptrdiff_t>(end));
    out.values.resize(channels() * (end - begin));
    for (std::size_t ch = 0; ch < channels(); ++ch) {
        const double* src = values.data() + ch * length() + begin;
        std::memcpy(out.values.data() + ch * (end - begin), src, (end - begin) * sizeof(double));
    }
    return out;
}

void TimeSeries::validate() const {
    if (channel_names.empty()) throw FormatError("series has no channels");
    if (times.empty()) throw FormatError("series has no samples");
    if (values.size() != channels() * length())
        throw FormatError("value buffer size does not match channels x length");
    for (double v : values)
        if (!std::isfinite(v)) throw FormatError("series contains a non-finite value");
    for (double t : times)
        if (!std::isfinite(t)) throw FormatError("series contains a non-finite time");
    if (times.size() >= 2) {
        const double step = times[1] - times[0];
        if (!(step > 0.0)) throw FormatError("times must be strictly increasing");
        for (std::size_t i = 1; i < times.size(); ++i) {
            const double d = times[i] - times[i - 1];
            if (!(d > 0.0)) throw FormatError("times must be strictly increasing");
            if (std::fabs(d - step) > 1.0e-9 * std::fabs(step))
                throw FormatError("times are not uniformly spaced");
        }
    }
}

void write_csv(const TimeSeries& series, const std::string& path) {
    series.validate();
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::string header = "t";
    for (const auto& name : series.channel_names) header += "," + name;
    header += "\n";
    std::fputs(header.c_str(), f);

    const std::size_t n = series.length();
    const std::size_t c = series.channels();
    char buf[32];
    std::string line;
    for (std::size_t i = 0; i < n; ++i) {
        line.clear();
        std::snprintf(buf, sizeof(buf), "%.17g", series.times[i]);
        line += buf;
        for (std::size_t ch = 0; ch < c; ++ch) {
            std::snprintf(buf, sizeof(buf), "%.17g", series.values[ch * n + i]);
            line += ',';
            line += buf;
        }
        line += '\n';
        if (std::fputs(line.c_str(), f) == EOF) {
            std::fclose(f);
            throw IoError("write failed: " + path);
        }
    }
    if (std::fclose(f) != 0) throw IoError("close failed: " + path);
}

namespace {

double parse_cell(const std::string& cell, std::size_t row) {
    if (cell.empty()) throw FormatError("empty cell in row " + std::to_string(row));
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + cell.size())
        throw FormatError("non-numeric cell '" + cell + "' in row " + std::to_string(row));
    return v;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace

TimeSeries read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);

    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty file: " + path);
    auto header = split_line(line);
    if (header.size() < 2 || header[0] != "t")
        throw FormatError("header must read `t,<ch1>,...`, got '" + line + "'");

    TimeSeries out;
    out.channel_names.assign(header.begin() + 1, header.end());
    const std::size_t c = out.channel_names.size();

    std::vector<std::vector<double>> cols(c);
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() && in.eof()) break;
        auto cells = split_line(line);
        if (cells.size() != c + 1)
            throw FormatError("row " + std::to_string(row) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(c + 1));
        out.times.push_back(parse_cell(cells[0], row));
        for (std::size_t ch = 0; ch < c; ++ch) cols[ch].push_back(parse_cell(cells[ch + 1], row));
    }
    if (out.times.empty()) throw FormatError("no data rows in " + path);

    const std::size_t n = out.times.size();
    out.values.resize(c * n);
    for (std::size_t ch = 0; ch < c; ++ch)
        std::memcpy(out.values.data() + ch * n, cols[ch].data(), n * sizeof(double));
    out.validate();
    return out;
}

}  // namespace robermix
