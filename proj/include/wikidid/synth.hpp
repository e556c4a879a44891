#pragma once

// Deterministic synthetic corpora with known ground truth. Everything is a
// pure function of (config, seed): the generator runs on a counter-based
// SplitMix64 stream, with hand-rolled distributions so the byte stream does
// not depend on a standard library's distribution internals.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "wikidid/core.hpp"
#include "wikidid/dump.hpp"
#include "wikidid/series.hpp"

namespace wikidid::synth {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    double normal(double mean = 0.0, double sd = 1.0) {
        const double u1 = 1.0 - next_double(); // (0, 1]
        const double u2 = next_double();
        return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Exact Poisson; large means are peeled into <=30 chunks so Knuth's
    // product method never underflows.
    std::int64_t poisson(double lambda) {
        std::int64_t count = 0;
        while (lambda > 30.0) {
            count += poisson_small(30.0);
            lambda -= 30.0;
        }
        return count + poisson_small(lambda);
    }

private:
    std::int64_t poisson_small(double lambda) {
        if (lambda <= 0.0) return 0;
        const double limit = std::exp(-lambda);
        std::int64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= next_double();
        } while (p > limit);
        return k - 1;
    }

    std::uint64_t state_;
};

// Stable per-stream sub-seed so generation order across languages does not
// matter (FNV-1a over the tag, mixed with the master seed).
inline std::uint64_t stream_seed(std::uint64_t master, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h ^ (master * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL);
}

struct ShockSpec {
    Date start;
    Date end;                                // inclusive
    double multiplier = 1.0;                 // applied to daily edit intensity
    std::set<std::string> affected_languages;

    bool applies(const std::string& language, Date d) const {
        return multiplier > 0.0 && d >= start && d <= end &&
               affected_languages.count(language) > 0;
    }
};

struct LanguageIntensity {
    std::string code;
    double base_intensity = 100.0; // non-bot edits/day
};

struct SynthConfig {
    std::uint64_t seed = 1;
    Date start;
    Date end; // inclusive
    std::vector<LanguageIntensity> languages;
    double newcomer_rate = 3.0;       // expected newcomer arrivals/day
    double revert_probability = 0.05; // chance any edit is an identity revert
    double bot_fraction = 0.10;       // bot intensity as a fraction of base
    double anonymous_fraction = 0.30; // of non-bot edits
};

struct GroundTruth {
    std::optional<ShockSpec> shock;
    double log_effect = 0.0; // ln(multiplier)

    double intensity(const LanguageIntensity& lang, Date d) const {
        double lambda = lang.base_intensity;
        if (shock && shock->applies(lang.code, d)) lambda *= shock->multiplier;
        return lambda;
    }
};

struct SynthLog {
    std::map<std::string, std::vector<RawDumpRecord>> records_by_language;
    GroundTruth truth;
};

// Synthetic revision log. Daily non-bot edit counts are Poisson draws around
// the (possibly shocked) intensity; timestamps are UTC and ascending, so the
// output satisfies the dump ordering contract.
inline SynthLog gen_revision_log(const SynthConfig& config,
                                 const std::optional<ShockSpec>& shock = std::nullopt) {
    SynthLog out;
    out.truth.shock = shock;
    out.truth.log_effect = shock ? std::log(shock->multiplier) : 0.0;

    for (const LanguageIntensity& lang : config.languages) {
        Rng rng(stream_seed(config.seed, lang.code));
        std::vector<RawDumpRecord>& records = out.records_by_language[lang.code];
        std::int64_t next_user_id = 1;
        std::vector<std::int64_t> user_pool;

        for (Date d = config.start; d <= config.end; ++d) {
            const double lambda = out.truth.intensity(lang, d);
            const std::int64_t n_human = rng.poisson(lambda);
            const std::int64_t n_bot = rng.poisson(lang.base_intensity * config.bot_fraction);
            const std::int64_t n_new = std::min<std::int64_t>(rng.poisson(config.newcomer_rate), n_human);
            const std::int64_t n_events = n_human + n_bot;
            if (n_events == 0) continue;

            std::vector<std::int64_t> offsets(static_cast<std::size_t>(n_events));
            for (auto& o : offsets) o = static_cast<std::int64_t>(rng.below(86400));
            std::sort(offsets.begin(), offsets.end());

            const Instant day_start = static_cast<Instant>(d.days()) * 86400;
            for (std::int64_t i = 0; i < n_events; ++i) {
                RawDumpRecord r;
                r.event_entity = "revision";
                r.event_type = "create";
                r.timestamp_utc = day_start + offsets[static_cast<std::size_t>(i)];
                r.page_namespace = 0;
                r.page_id = static_cast<std::int64_t>(rng.below(10'000)) + 1;
                r.is_identity_revert = rng.next_double() < config.revert_probability;
                r.byte_delta = static_cast<std::int64_t>(std::lround(rng.normal(80.0, 400.0)));
                if (i >= n_human) {
                    r.is_bot = true;
                    r.user_id = 9'000'000'000LL + static_cast<std::int64_t>(rng.below(50));
                } else if (i < n_new) {
                    r.user_id = next_user_id++;
                    user_pool.push_back(*r.user_id);
                } else if (rng.next_double() < config.anonymous_fraction || user_pool.empty()) {
                    r.is_anonymous = true;
                } else {
                    r.user_id = user_pool[rng.below(user_pool.size())];
                }
                records.push_back(std::move(r));
            }
        }
    }
    return out;
}

// Daily Poisson count series around the same shocked intensity, for cases
// where materializing individual events is unnecessary. Draws from its own
// stream; not count-identical to gen_revision_log.
inline DateSeries gen_poisson_series(std::uint64_t seed, const LanguageIntensity& lang,
                                     Date start, Date end,
                                     const std::optional<ShockSpec>& shock = std::nullopt) {
    GroundTruth truth;
    truth.shock = shock;
    Rng rng(stream_seed(seed, std::string("counts:") + lang.code));
    DateSeries s;
    s.start = start;
    s.values.reserve(static_cast<std::size_t>(end - start) + 1);
    for (Date d = start; d <= end; ++d)
        s.values.push_back(static_cast<double>(rng.poisson(truth.intensity(lang, d))));
    return s;
}

// Piecewise-constant mobility series with Gaussian noise: 0 before the step
// date, step_size from it onward.
inline DateSeries gen_mobility(Date start, Date end, Date step_date, double step_size,
                               double noise_sd, std::uint64_t seed) {
    Rng rng(stream_seed(seed, "mobility"));
    DateSeries s;
    s.start = start;
    s.values.reserve(static_cast<std::size_t>(end - start) + 1);
    for (Date d = start; d <= end; ++d) {
        const double mean = d >= step_date ? step_size : 0.0;
        s.values.push_back(noise_sd > 0.0 ? rng.normal(mean, noise_sd) : mean);
    }
    return s;
}

// Serializes records to the exact dump TSV format consumed by DumpReader.
inline void write_dump_tsv(std::ostream& os, const std::vector<RawDumpRecord>& records) {
    os << DumpSchema::canonical_header() << '\n';
    for (const RawDumpRecord& r : records) os << format_dump_row(r) << '\n';
}

} // namespace wikidid::synth
