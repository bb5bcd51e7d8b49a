#include "otsep/wav.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace otsep {

namespace {

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    out.write(b, 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
    char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
    out.write(b, 2);
}

}  // namespace

TimeSignal load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open wav file: " + path);

    char tag[4];
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "RIFF", 4) != 0)
        throw std::runtime_error("not a RIFF file: " + path);
    read_u32(in);  // chunk size
    in.read(tag, 4);
    if (!in || std::memcmp(tag, "WAVE", 4) != 0)
        throw std::runtime_error("not a WAVE file: " + path);

    std::uint16_t channels = 0, bits = 0;
    std::uint32_t rate = 0;
    bool have_fmt = false;
    std::vector<std::int16_t> pcm;

    while (in.read(tag, 4)) {
        std::uint32_t size = read_u32(in);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            std::uint16_t format = read_u16(in);
            channels = read_u16(in);
            rate = read_u32(in);
            read_u32(in);  // byte rate
            read_u16(in);  // block align
            bits = read_u16(in);
            if (size > 16) in.seekg(size - 16, std::ios::cur);
            if (format != 1)
                throw std::runtime_error("only PCM wav supported: " + path);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt) throw std::runtime_error("wav data before fmt: " + path);
            pcm.resize(size / 2);
            in.read(reinterpret_cast<char*>(pcm.data()), size & ~1u);
            if (!in) throw std::runtime_error("truncated wav data: " + path);
            break;
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }
    if (!have_fmt || pcm.empty())
        throw std::runtime_error("wav missing fmt or data chunk: " + path);
    if (channels != 1)
        throw std::runtime_error("wav must be mono: " + path);
    if (bits != 16)
        throw std::runtime_error("wav must be 16-bit PCM: " + path);

    TimeSignal sig;
    sig.sample_rate = rate;
    sig.samples.resize(pcm.size());
    for (size_t i = 0; i < pcm.size(); ++i) sig.samples[i] = pcm[i] / 32768.0;
    return sig;
}

void save_wav(const std::string& path, const TimeSignal& sig) {
    validate(sig);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write wav file: " + path);

    const std::uint32_t n = static_cast<std::uint32_t>(sig.samples.size());
    const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(sig.sample_rate));
    out.write("RIFF", 4);
    write_u32(out, 36 + 2 * n);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, 1);  // PCM
    write_u16(out, 1);  // mono
    write_u32(out, rate);
    write_u32(out, rate * 2);
    write_u16(out, 2);
    write_u16(out, 16);
    out.write("data", 4);
    write_u32(out, 2 * n);
    for (double v : sig.samples) {
        double c = std::min(std::max(v, -1.0), 32767.0 / 32768.0);
        std::int16_t q = static_cast<std::int16_t>(std::lround(c * 32768.0));
        write_u16(out, static_cast<std::uint16_t>(q));
    }
    if (!out) throw std::runtime_error("short write to wav file: " + path);
}

}  // namespace otsep
