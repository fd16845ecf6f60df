#include "asyncsgd/trace_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <ostream>

namespace asyncsgd {

std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) return "nan";
    return std::string(buf.data(), end);
}

void write_trace_csv(std::ostream& os, const RunTrace& trace) {
    os << kTraceCsvHeader << '\n';
    for (const auto& r : trace.records) {
        os << r.t << ',' << r.worker << ',' << r.client << ',' << r.delay << ',' << format_double(r.eta) << ','
           << format_double(r.grad_norm) << ',' << format_double(r.value) << ',' << format_double(r.sim_time) << ','
           << r.assigned << ',' << r.active << '\n';
    }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfigError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace asyncsgd
