#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace robermix {

// Uniformly sampled multichannel series. Values are stored channel-major:
// values[ch * length() + i] is channel ch at times[i].
struct TimeSeries {
    std::vector<double> times;
    std::vector<std::string> channel_names;
    std::vector<double> values;

    std::size_t channels() const { return channel_names.size(); }
    std::size_t length() const { return times.size(); }

    double dt() const;  // sampling interval, from the first two times

    double value(std::size_t ch, std::size_t i) const { return values[ch * length() + i]; }
    double& value(std::size_t ch, std::size_t i) { return values[ch * length() + i]; }

    std::span<const double> channel(std::size_t ch) const {
        return {values.data() + ch * length(), length()};
    }

    // Contiguous sub-series [begin, end). Copies.
    TimeSeries slice(std::size_t begin, std::size_t end) const;

    // Throws FormatError if times are not strictly increasing and uniform
    // (within 1e-9 relative), or any value is non-finite, or sizes disagree.
    void validate() const;
};

// Writes `t,<ch1>,<ch2>,...` then one row per sample, %.17g, LF endings.
void write_csv(const TimeSeries& series, const std::string& path);

// Strict parser for the format above. Throws FormatError on bad header,
// ragged rows, non-numeric cells or non-uniform times; IoError if unreadable.
TimeSeries read_csv(const std::string& path);

}  // namespace robermix
