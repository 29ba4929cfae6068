#include "biomark/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "biomark/error.hpp"
#include "biomark/text.hpp"

namespace biomark::dsp {

using cd = std::complex<double>;

std::vector<BandDefinition> default_bands() {
    return {{"delta", 2, 4}, {"theta", 4, 8}, {"alpha", 8, 12}, {"beta", 12, 35}, {"lowgamma", 30, 48}, {"highgamma", 52, 86}};
}

// ---------------------------------------------------------------------------
// Filter design

int FilterCascade::cascade_order() const {
    int n = 0;
    for (const auto& s : sections) n += s.first_order() ? 1 : 2;
    return n;
}

std::complex<double> FilterCascade::response(double f_hz) const {
    const double w = 2.0 * std::numbers::pi * f_hz / fs_hz;
    const cd zi = std::polar(1.0, -w);  // z^-1
    const cd zi2 = zi * zi;
    cd h = 1.0;
    for (const auto& s : sections) h *= (s.b0 + s.b1 * zi + s.b2 * zi2) / (1.0 + s.a1 * zi + s.a2 * zi2);
    return h;
}

std::vector<std::complex<double>> FilterCascade::poles() const {
    std::vector<cd> out;
    for (const auto& s : sections) {
        if (s.first_order()) {
            out.emplace_back(-s.a1, 0.0);
            continue;
        }
        // z^2 + a1 z + a2 = 0
        const cd disc = std::sqrt(cd(s.a1 * s.a1 - 4.0 * s.a2, 0.0));
        out.push_back((-s.a1 + disc) / 2.0);
        out.push_back((-s.a1 - disc) / 2.0);
    }
    return out;
}

namespace {

cd bilinear(cd s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

double prewarp(double f_hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * f_hz / fs); }

std::vector<cd> prototype_poles(int n) {
    std::vector<cd> p;
    for (int k = 1; k <= n; ++k)
        p.push_back(std::polar(1.0, std::numbers::pi * (2.0 * k + n - 1.0) / (2.0 * n)));
    return p;
}

cd eval_cascade(const std::vector<Biquad>& sections, cd z) {
    const cd zi = 1.0 / z;
    cd h = 1.0;
    for (const auto& s : sections) h *= (s.b0 + s.b1 * zi + s.b2 * zi * zi) / (1.0 + s.a1 * zi + s.a2 * zi * zi);
    return h;
}

}  // namespace

FilterCascade design_butterworth(FilterKind kind, int order, std::span<const double> cutoffs_hz, double fs_hz) {
    if (order < 1) throw ValidationError("design_butterworth: order must be >= 1");
    if (!(fs_hz > 0)) throw ValidationError("design_butterworth: sample rate must be positive");
    const std::size_t n_edges = kind == FilterKind::Bandstop ? 2 : 1;
    if (cutoffs_hz.size() != n_edges)
        throw ValidationError("design_butterworth: expected " + std::to_string(n_edges) + " cutoff frequencies");
    const double nyquist = fs_hz / 2.0;
    for (double c : cutoffs_hz)
        if (!(c > 0.0 && c < nyquist))
            throw ValidationError("design_butterworth: cutoff " + text::format_double(c) +
                                  " Hz must lie strictly inside (0, " + text::format_double(nyquist) + ") Hz");
    if (kind == FilterKind::Bandstop && !(cutoffs_hz[0] < cutoffs_hz[1]))
        throw ValidationError("design_butterworth: bandstop needs low < high");

    const auto proto = prototype_poles(order);
    std::vector<cd> poles;   // digital
    std::vector<cd> zeros;   // digital, one per pole
    cd reference = 1.0;      // point of unit gain

    switch (kind) {
        case FilterKind::Lowpass: {
            const double wc = prewarp(cutoffs_hz[0], fs_hz);
            for (cd p : proto) {
                poles.push_back(bilinear(wc * p, fs_hz));
                zeros.emplace_back(-1.0, 0.0);
            }
            reference = 1.0;
            break;
        }
        case FilterKind::Highpass: {
            const double wc = prewarp(cutoffs_hz[0], fs_hz);
            for (cd p : proto) {
                poles.push_back(bilinear(wc / p, fs_hz));
                zeros.emplace_back(1.0, 0.0);
            }
            reference = -1.0;
            break;
        }
        case FilterKind::Bandstop: {
            const double w1 = prewarp(cutoffs_hz[0], fs_hz);
            const double w2 = prewarp(cutoffs_hz[1], fs_hz);
            const double bw = w2 - w1;
            const double w0sq = w1 * w2;
            const cd zero = bilinear(cd(0.0, std::sqrt(w0sq)), fs_hz);
            for (cd p : proto) {
                // p s^2 - bw s + p w0^2 = 0
                const cd disc = std::sqrt(bw * bw - 4.0 * p * p * w0sq);
                poles.push_back(bilinear((bw + disc) / (2.0 * p), fs_hz));
                poles.push_back(bilinear((bw - disc) / (2.0 * p), fs_hz));
                zeros.push_back(zero);
                zeros.push_back(std::conj(zero));
            }
            reference = 1.0;
            break;
        }
    }

    constexpr double tol = 1e-10;
    std::vector<cd> complex_poles;
    std::vector<double> real_poles;
    for (cd p : poles) {
        if (std::abs(p.imag()) <= tol * std::max(1.0, std::abs(p)))
            real_poles.push_back(p.real());
        else if (p.imag() > 0)
            complex_poles.push_back(p);
    }
    std::vector<cd> complex_zeros;
    std::vector<double> real_zeros;
    for (cd z : zeros) {
        if (std::abs(z.imag()) <= tol)
            real_zeros.push_back(z.real());
        else if (z.imag() > 0)
            complex_zeros.push_back(z);
    }
    std::sort(complex_poles.begin(), complex_poles.end(), [](cd a, cd b) { return std::abs(a) < std::abs(b); });

    FilterCascade out;
    out.kind = kind;
    out.order = order;
    out.cutoffs_hz.assign(cutoffs_hz.begin(), cutoffs_hz.end());
    out.fs_hz = fs_hz;

    auto take_zero_pair = [&](Biquad& s) {
        if (!complex_zeros.empty()) {
            const cd z = complex_zeros.back();
            complex_zeros.pop_back();
            s.b0 = 1.0;
            s.b1 = -2.0 * z.real();
            s.b2 = std::norm(z);
        } else {
            const double z1 = real_zeros.back();
            real_zeros.pop_back();
            const double z2 = real_zeros.back();
            real_zeros.pop_back();
            s.b0 = 1.0;
            s.b1 = -(z1 + z2);
            s.b2 = z1 * z2;
        }
    };

    for (cd p : complex_poles) {
        Biquad s;
        s.a1 = -2.0 * p.real();
        s.a2 = std::norm(p);
        take_zero_pair(s);
        out.sections.push_back(s);
    }
    std::sort(real_poles.begin(), real_poles.end());
    while (real_poles.size() >= 2) {
        Biquad s;
        const double p1 = real_poles.back();
        real_poles.pop_back();
        const double p2 = real_poles.back();
        real_poles.pop_back();
        s.a1 = -(p1 + p2);
        s.a2 = p1 * p2;
        take_zero_pair(s);
        out.sections.push_back(s);
    }
    if (!real_poles.empty()) {
        Biquad s;
        s.a1 = -real_poles.back();
        s.a2 = 0.0;
        s.b0 = 1.0;
        s.b1 = -real_zeros.back();
        s.b2 = 0.0;
        out.sections.push_back(s);
    }

    const cd g = eval_cascade(out.sections, reference);
    const double gain = 1.0 / std::abs(g);
    auto& first = out.sections.front();
    first.b0 *= gain;
    first.b1 *= gain;
    first.b2 *= gain;
    return out;
}

// ---------------------------------------------------------------------------
// Filtering and resampling

namespace {

void run_cascade(const FilterCascade& filter, std::vector<double>& x) {
    for (const auto& s : filter.sections) {
        double z1 = 0.0, z2 = 0.0;
        for (double& v : x) {
            const double in = v;
            const double y = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * y + z2;
            z2 = s.b2 * in - s.a2 * y;
            v = y;
        }
    }
}

}  // namespace

std::vector<double> apply_filter_cascade(const FilterCascade& filter, std::span<const double> signal, bool zero_phase) {
    if (signal.empty()) throw ValidationError("apply_filter_cascade: empty signal");
    const auto floor = static_cast<std::size_t>(3 * filter.cascade_order());
    if (signal.size() <= floor)
        throw ValidationError("apply_filter_cascade: signal length " + std::to_string(signal.size()) +
                              " must exceed 3 x filter order (" + std::to_string(floor) + ")");
    std::vector<double> y(signal.begin(), signal.end());
    run_cascade(filter, y);
    if (zero_phase) {
        std::reverse(y.begin(), y.end());
        run_cascade(filter, y);
        std::reverse(y.begin(), y.end());
    }
    return y;
}

std::vector<double> resample(std::span<const double> signal, double fs_in, double fs_out) {
    if (!(fs_in > 0 && fs_out > 0)) throw ValidationError("resample: sample rates must be positive");
    const double ratio = fs_in / fs_out;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * ratio)
        throw ValidationError("resample: non-integer ratio " + text::format_double(fs_in) + "/" +
                              text::format_double(fs_out));
    const auto step = static_cast<std::size_t>(rounded);
    std::vector<double> out;
    out.reserve(signal.size() / step + 1);
    for (std::size_t i = 0; i < signal.size(); i += step) out.push_back(signal[i]);
    return out;
}

EpochSet epoch_signal(std::span<const double> signal, double fs_hz, double epoch_seconds) {
    const double len = epoch_seconds * fs_hz;
    const double rounded = std::round(len);
    if (!(rounded >= 1.0) || std::abs(len - rounded) > 1e-9 * std::max(1.0, len))
        throw ValidationError("epoch_signal: epoch length x sample rate must be a positive integer");
    const auto n = static_cast<std::size_t>(rounded);
    if (signal.size() < n)
        throw ValidationError("epoch_signal: signal of " + std::to_string(signal.size()) +
                              " samples is shorter than one epoch (" + std::to_string(n) + ")");
    EpochSet out;
    out.channels = 1;
    out.samples_per_epoch = n;
    out.n_epochs = signal.size() / n;
    out.fs_hz = fs_hz;
    out.channel_names = {"ch0"};
    out.data.assign(signal.begin(), signal.begin() + static_cast<std::ptrdiff_t>(out.n_epochs * n));
    return out;
}

EpochSet preprocess_continuous(std::span<const double> signal, double fs_hz, const PreprocessConfig& c) {
    const double lp[] = {c.lowpass_hz};
    auto x = apply_filter_cascade(design_butterworth(FilterKind::Lowpass, c.lowpass_order, lp, fs_hz), signal,
                                  c.zero_phase);
    x = resample(x, fs_hz, c.target_fs_hz);
    const double hp[] = {c.highpass_hz};
    x = apply_filter_cascade(design_butterworth(FilterKind::Highpass, c.highpass_order, hp, c.target_fs_hz), x,
                             c.zero_phase);
    const double bs[] = {c.notch_low_hz, c.notch_high_hz};
    x = apply_filter_cascade(design_butterworth(FilterKind::Bandstop, c.notch_order, bs, c.target_fs_hz), x,
                             c.zero_phase);
    return epoch_signal(x, c.target_fs_hz, c.epoch_seconds);
}

// ---------------------------------------------------------------------------
// Spectral features

namespace {

// FFTW planning is not thread-safe; execution on a finished plan is.
std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n) {
        in_ = fftw_alloc_real(n);
        out_ = fftw_alloc_complex(n / 2 + 1);
        std::lock_guard lock(fftw_planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() { return in_; }
    void execute() { fftw_execute(plan_); }
    double power(std::size_t k) const { return out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1]; }

private:
    std::size_t n_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

bool in_range(double f, const FrequencyRange& r) { return f >= r.low_hz && f < r.high_hz; }

}  // namespace

Eigen::MatrixXd band_relative_power(const EpochSet& epochs, std::span<const BandDefinition> bands,
                                    const SpectralConfig& config) {
    const double nyquist = epochs.fs_hz / 2.0;
    const auto& ar = config.analysis;
    if (!(ar.low_hz > 0.0 && ar.high_hz <= nyquist && ar.low_hz < ar.high_hz))
        throw ValidationError("band_relative_power: analysis range must lie inside (0, fs/2]");
    for (const auto& b : bands)
        if (!(b.low_hz >= ar.low_hz && b.high_hz <= ar.high_hz && b.low_hz < b.high_hz))
            throw ValidationError("band_relative_power: band '" + b.name + "' is not inside the analysis range");
    if (epochs.n_epochs == 0 || epochs.samples_per_epoch < 2)
        throw ValidationError("band_relative_power: no epochs");

    const std::size_t n = epochs.samples_per_epoch;
    const std::size_t n_bins = n / 2 + 1;
    const double df = epochs.fs_hz / static_cast<double>(n);

    std::vector<double> window(n);
    for (std::size_t i = 0; i < n; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));

    // Bin masks shared by all channels.
    std::vector<char> in_total(n_bins, 0);
    std::vector<std::vector<char>> in_band(bands.size(), std::vector<char>(n_bins, 0));
    for (std::size_t k = 0; k < n_bins; ++k) {
        const double f = static_cast<double>(k) * df;
        bool excluded = false;
        for (const auto& ex : config.exclusions) excluded = excluded || in_range(f, ex);
        if (excluded) continue;
        in_total[k] = in_range(f, ar);
        for (std::size_t b = 0; b < bands.size(); ++b) in_band[b][k] = in_range(f, {bands[b].low_hz, bands[b].high_hz});
    }

    RealFft fft(n);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(epochs.channels), static_cast<Eigen::Index>(bands.size()));
    std::vector<double> psd(n_bins);
    for (std::size_t c = 0; c < epochs.channels; ++c) {
        std::fill(psd.begin(), psd.end(), 0.0);
        double raw_energy = 0.0;
        for (std::size_t e = 0; e < epochs.n_epochs; ++e) {
            const auto x = epochs.epoch(c, e);
            double mean = 0.0;
            for (double v : x) {
                mean += v;
                raw_energy += v * v;
            }
            mean /= static_cast<double>(n);
            double* in = fft.input();
            for (std::size_t i = 0; i < n; ++i) in[i] = (x[i] - mean) * window[i];
            fft.execute();
            for (std::size_t k = 0; k < n_bins; ++k) psd[k] += fft.power(k);
        }
        double total = 0.0;
        for (std::size_t k = 0; k < n_bins; ++k)
            if (in_total[k]) total += psd[k];
        if (!(total > 1e-24 * raw_energy) || total <= 0.0)
            throw NumericalError("band_relative_power: degenerate spectrum (zero power in analysis range) for channel '" +
                                 (c < epochs.channel_names.size() ? epochs.channel_names[c] : std::to_string(c)) + "'");
        for (std::size_t b = 0; b < bands.size(); ++b) {
            double p = 0.0;
            for (std::size_t k = 0; k < n_bins; ++k)
                if (in_band[b][k]) p += psd[k];
            out(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b)) = p / total;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Epoch file I/O

EpochSet read_epoch_file(const std::filesystem::path& file, std::filesystem::path sidecar) {
    if (sidecar.empty()) {
        sidecar = file;
        sidecar += ".json";
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(text::read_file(sidecar));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(sidecar.string() + ": invalid JSON: " + e.what());
    }
    EpochSet out;
    try {
        out.channels = meta.at("channels").get<std::size_t>();
        out.fs_hz = meta.at("fs_hz").get<double>();
        out.samples_per_epoch = meta.at("epoch_len").get<std::size_t>();
        out.n_epochs = meta.at("n_epochs").get<std::size_t>();
        if (meta.contains("channel_names")) out.channel_names = meta.at("channel_names").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(sidecar.string() + ": " + e.what());
    }
    if (out.channel_names.empty())
        for (std::size_t c = 0; c < out.channels; ++c) out.channel_names.push_back("ch" + std::to_string(c));
    if (out.channel_names.size() != out.channels)
        throw ValidationError(sidecar.string() + ": channel_names length differs from channels");

    const std::size_t count = out.channels * out.n_epochs * out.samples_per_epoch;
    const std::string raw = text::read_file(file);
    if (raw.size() != count * 4)
        throw ValidationError(file.string() + ": expected " + std::to_string(count * 4) + " bytes, found " +
                              std::to_string(raw.size()));
    out.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(raw[i * 4 + static_cast<std::size_t>(b)]);
        float f = 0.0f;
        std::memcpy(&f, &bits, sizeof f);
        out.data[i] = f;
    }
    return out;
}

void write_epoch_file(const EpochSet& epochs, const std::filesystem::path& file, const std::filesystem::path& sidecar) {
    std::string raw(epochs.data.size() * 4, '\0');
    for (std::size_t i = 0; i < epochs.data.size(); ++i) {
        const float f = static_cast<float>(epochs.data[i]);
        std::uint32_t bits = 0;
        std::memcpy(&bits, &f, sizeof bits);
        for (std::size_t b = 0; b < 4; ++b) raw[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    text::write_file_atomic(file, raw);
    std::filesystem::path side = sidecar;
    if (side.empty()) {
        side = file;
        side += ".json";
    }
    nlohmann::json meta = {{"channels", epochs.channels},
                           {"fs_hz", epochs.fs_hz},
                           {"epoch_len", epochs.samples_per_epoch},
                           {"n_epochs", epochs.n_epochs},
                           {"channel_names", epochs.channel_names}};
    text::write_file_atomic(side, meta.dump(2) + "\n");
}

}  // namespace biomark::dsp
