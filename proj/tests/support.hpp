#pragma once

// Independent oracles and seeded generators shared by the test suites. None
// of this calls into the code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <condition_variable>
#include <filesystem>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace testsupport {

// Minimum edit cost by exhaustive search over edit scripts with iterative
// deepening. The only pruning is the length-difference bound and the usual
// lemma that equal leading symbols may be matched without loss.
inline bool reachable(std::span<const std::string> a, std::span<const std::string> b, std::size_t budget) {
    const std::size_t diff = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
    if (diff > budget) return false;
    if (a.empty() || b.empty()) return true;  // diff <= budget covers the rest
    if (a[0] == b[0]) return reachable(a.subspan(1), b.subspan(1), budget);
    if (budget == 0) return false;
    return reachable(a.subspan(1), b.subspan(1), budget - 1)  // substitute
           || reachable(a.subspan(1), b, budget - 1)         // delete
           || reachable(a, b.subspan(1), budget - 1);        // insert
}

inline std::size_t brute_force_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    for (std::size_t d = 0;; ++d) {
        if (reachable(a, b, d)) return d;
    }
}

// Hand-listed code point blocks that unambiguously belong to the five
// scripts scored character by character.
inline bool cjk_block_oracle(char32_t cp) {
    struct Range {
        char32_t lo, hi;
    };
    static constexpr Range kRanges[] = {
        {0x4E00, 0x9FFF},    // CJK unified ideographs
        {0x3400, 0x4DBF},    // extension A
        {0x20000, 0x2A6DF},  // extension B
        {0x3041, 0x3096},    // hiragana letters
        {0x30A1, 0x30FA},    // katakana letters
        {0xAC00, 0xD7A3},    // hangul syllables
        {0x1100, 0x11FF},    // hangul jamo
        {0x3105, 0x312F},    // bopomofo
    };
    return std::any_of(std::begin(kRanges), std::end(kRanges), [&](Range r) { return cp >= r.lo && cp <= r.hi; });
}

// Two-pass sample correlation in long double.
inline double pearson_closed_form(const std::vector<double>& x, const std::vector<double>& y) {
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

// Majority over rounds of (forward AND backward), written out directly.
inline bool vote_oracle(const std::vector<std::pair<bool, bool>>& rounds) {
    int yes = 0;
    for (auto [f, b] : rounds) yes += (f && b) ? 1 : 0;
    const int k = static_cast<int>(rounds.size());
    return 2 * yes >= k + 1;
}

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
    int between(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[index(v.size())];
    }

    std::vector<std::string> symbols(std::size_t max_len, std::size_t alphabet) {
        std::vector<std::string> out(index(max_len + 1));
        for (auto& s : out) s = std::string(1, static_cast<char>('a' + index(alphabet)));
        return out;
    }

    // Text mixing Latin words, CJK characters, digits, punctuation and
    // irregular whitespace.
    std::string messy_text() {
        static const std::vector<std::string> pieces = {
            "Hello", "world", "let's", "Qwen3-ASR", "模型", "我", "用", "カタ", "한국", "ㄅ", "NEW", "York", "42",
            "don't", "e-mail", ",", ".", "!", "?", "“quoted”", "(x)", "  ", " ", "\t", "\u2014", "-", "'", "café", "ÉCOLE"};
        std::string out;
        const int n = between(0, 12);
        for (int i = 0; i < n; ++i) {
            out += pick(pieces);
            if (coin(0.6)) out += ' ';
        }
        return out;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

// Blocks every call until released; counts callers currently inside.
class Gate {
public:
    void pass() {
        std::unique_lock lock(mu_);
        ++waiting_;
        cv_.notify_all();
        cv_.wait(lock, [&] { return open_; });
        --waiting_;
    }
    void wait_for_waiters(int n) {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return waiting_ >= n; });
    }
    void open() {
        std::lock_guard lock(mu_);
        open_ = true;
        cv_.notify_all();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int waiting_ = 0;
    bool open_ = false;
};

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = std::filesystem::temp_directory_path() / ("iasr-test-" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testsupport
