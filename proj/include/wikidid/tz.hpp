#pragma once

// Minimal reader for compiled IANA tzdata (TZif, RFC 8536). Only what date
// localization needs: the UTC offset in effect at a given instant, taken from
// the 64-bit transition table. libstdc++ shipped with GCC 11 has no
// std::chrono time-zone database, hence this reader over /usr/share/zoneinfo.

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "wikidid/core.hpp"

namespace wikidid {

class Timezone {
public:
    // Loads a zone by IANA name from $TZDIR or /usr/share/zoneinfo.
    // Throws ConfigError for unknown zones or unreadable files.
    static Timezone load(const std::string& name) {
        if (name == "UTC" || name == "Etc/UTC") return Timezone(name);
        const char* tzdir = std::getenv("TZDIR");
        std::string path = (tzdir && *tzdir ? std::string(tzdir) : std::string("/usr/share/zoneinfo"));
        path += "/" + name;
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("unknown timezone: " + name);
        std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        Timezone tz(name);
        tz.parse(data);
        return tz;
    }

    // Shared, lazily-loaded registry; safe for concurrent use.
    static const Timezone& get(const std::string& name) {
        static std::mutex mu;
        static std::map<std::string, std::unique_ptr<Timezone>> zones;
        std::lock_guard<std::mutex> lock(mu);
        auto it = zones.find(name);
        if (it == zones.end())
            it = zones.emplace(name, std::make_unique<Timezone>(load(name))).first;
        return *it->second;
    }

    const std::string& name() const { return name_; }

    // Seconds east of UTC in effect at t.
    std::int32_t offset_at(Instant t) const {
        if (transitions_.empty())
            return offsets_.empty() ? 0 : offsets_[default_type_];
        // Last transition at or before t; before the first one, the zone's
        // initial (usually standard-time) type applies.
        std::size_t lo = 0, hi = transitions_.size();
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (transitions_[mid] <= t) lo = mid + 1; else hi = mid;
        }
        if (lo == 0) return offsets_[default_type_];
        return offsets_[types_[lo - 1]];
    }

    // Civil date of a UTC instant in this zone.
    Date civil_date(Instant t) const { return utc_date(t + offset_at(t)); }

    explicit Timezone(std::string name) : name_(std::move(name)) {}

private:
    void parse(const std::vector<char>& data) {
        std::size_t pos = 0;
        const Header h1 = read_header(data, pos);
        if (h1.version >= '2') {
            // Skip the legacy 32-bit block, then read the 64-bit one.
            pos += h1.block_size(4);
            const Header h2 = read_header(data, pos);
            read_block(data, pos, h2, 8);
        } else {
            read_block(data, pos, h1, 4);
        }
        // Initial type: first non-DST type referenced, else type 0.
        default_type_ = 0;
        for (std::size_t i = 0; i < isdst_.size(); ++i) {
            if (!isdst_[i]) { default_type_ = i; break; }
        }
    }

    struct Header {
        char version = '\0';
        std::uint32_t isutcnt = 0, isstdcnt = 0, leapcnt = 0, timecnt = 0, typecnt = 0, charcnt = 0;
        std::size_t block_size(std::size_t time_width) const {
            return timecnt * time_width + timecnt + typecnt * 6 + charcnt +
                   leapcnt * (time_width + 4) + isstdcnt + isutcnt;
        }
    };

    static std::uint32_t read_u32(const std::vector<char>& d, std::size_t p) {
        return (std::uint32_t(std::uint8_t(d[p])) << 24) | (std::uint32_t(std::uint8_t(d[p + 1])) << 16) |
               (std::uint32_t(std::uint8_t(d[p + 2])) << 8) | std::uint32_t(std::uint8_t(d[p + 3]));
    }

    static std::int64_t read_time(const std::vector<char>& d, std::size_t p, std::size_t width) {
        if (width == 4) return static_cast<std::int32_t>(read_u32(d, p));
        const std::uint64_t hi = read_u32(d, p), lo = read_u32(d, p + 4);
        return static_cast<std::int64_t>((hi << 32) | lo);
    }

    Header read_header(const std::vector<char>& d, std::size_t& pos) const {
        if (d.size() < pos + 44 || std::string_view(d.data() + pos, 4) != "TZif")
            throw ConfigError("not a TZif file: " + name_);
        Header h;
        h.version = d[pos + 4];
        h.isutcnt = read_u32(d, pos + 20);
        h.isstdcnt = read_u32(d, pos + 24);
        h.leapcnt = read_u32(d, pos + 28);
        h.timecnt = read_u32(d, pos + 32);
        h.typecnt = read_u32(d, pos + 36);
        h.charcnt = read_u32(d, pos + 40);
        pos += 44;
        return h;
    }

    void read_block(const std::vector<char>& d, std::size_t& pos, const Header& h, std::size_t width) {
        if (d.size() < pos + h.block_size(width))
            throw ConfigError("truncated TZif file: " + name_);
        transitions_.resize(h.timecnt);
        types_.resize(h.timecnt);
        for (std::uint32_t i = 0; i < h.timecnt; ++i)
            transitions_[i] = read_time(d, pos + i * width, width);
        pos += h.timecnt * width;
        for (std::uint32_t i = 0; i < h.timecnt; ++i)
            types_[i] = static_cast<std::uint8_t>(d[pos + i]);
        pos += h.timecnt;
        offsets_.resize(h.typecnt);
        isdst_.resize(h.typecnt);
        for (std::uint32_t i = 0; i < h.typecnt; ++i) {
            offsets_[i] = static_cast<std::int32_t>(read_u32(d, pos + i * 6));
            isdst_[i] = d[pos + i * 6 + 4] != 0;
        }
        pos += h.typecnt * 6 + h.charcnt + h.leapcnt * (width + 4) + h.isstdcnt + h.isutcnt;
        for (std::uint8_t ty : types_)
            if (ty >= offsets_.size()) throw ConfigError("corrupt TZif type index: " + name_);
    }

    std::string name_;
    std::vector<std::int64_t> transitions_;
    std::vector<std::uint8_t> types_;
    std::vector<std::int32_t> offsets_;
    std::vector<bool> isdst_;
    std::size_t default_type_ = 0;
};

} // namespace wikidid
