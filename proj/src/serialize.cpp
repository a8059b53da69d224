#include "fedul/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fedul {

namespace {

constexpr char kMagic[4] = {'C', 'N', 'D', 'A'};

// Hard caps so a corrupt length field fails fast instead of allocating
// terabytes.
constexpr std::uint64_t kMaxDim = 1ull << 30;
constexpr std::uint64_t kMaxClients = 1ull << 20;
constexpr std::uint64_t kMaxRounds = 1ull << 20;
constexpr std::uint64_t kMaxHidden = 64;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw IoError("cannot open for writing: " + path);
    }

    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    }

    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 4);
    }

    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }

    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void f64s(const double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f64(p[i]);
    }

    void finish() {
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw ArtifactError("missing artifact: " + path);
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n))
            throw DataError("truncated artifact: " + path_);
    }

    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }

    void f64s(double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) p[i] = f64();
    }

    void expect_end() {
        char c;
        in_.read(&c, 1);
        if (!in_.eof()) throw DataError("trailing bytes in artifact: " + path_);
    }

    const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
};

void write_header(Writer& w, ArtifactKind kind) {
    w.bytes(kMagic, 4);
    w.u32(kContainerVersion);
    w.u32(static_cast<std::uint32_t>(kind));
}

void read_header(Reader& r, ArtifactKind expected) {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not a CNDA artifact: " + r.path());
    const std::uint32_t version = r.u32();
    if (version != kContainerVersion)
        throw DataError("unsupported container version " + std::to_string(version) +
                        " in " + r.path());
    const std::uint32_t kind = r.u32();
    if (kind != static_cast<std::uint32_t>(expected))
        throw DataError("artifact kind mismatch in " + r.path() + ": expected " +
                        std::to_string(static_cast<std::uint32_t>(expected)) + ", got " +
                        std::to_string(kind));
}

std::uint64_t checked_count(std::uint64_t v, std::uint64_t cap, const char* what,
                            const std::string& path) {
    if (v > cap)
        throw DataError(std::string("implausible ") + what + " count " +
                        std::to_string(v) + " in " + path);
    return v;
}

} // namespace

void save_model(const std::string& path, const ParamVector& params,
                const ModelSpec& spec) {
    spec.validate();
    if (params.size() != param_count(spec))
        throw ContractError("save_model: params do not match the model spec");
    Writer w(path);
    write_header(w, ArtifactKind::Model);
    w.u32(static_cast<std::uint32_t>(spec.arch));
    w.i32(spec.input_h);
    w.i32(spec.input_w);
    w.i32(spec.input_c);
    w.i32(spec.classes);
    w.u32(static_cast<std::uint32_t>(spec.hidden.size()));
    for (int v : spec.hidden) w.i32(v);
    w.u64(spec.init_seed);
    w.u64(params.size());
    w.f64s(params.data(), params.size());
    w.finish();
}

LoadedModel load_model(const std::string& path) {
    Reader r(path);
    read_header(r, ArtifactKind::Model);
    LoadedModel m;
    const std::uint32_t arch = r.u32();
    if (arch > static_cast<std::uint32_t>(Arch::SmallCnn))
        throw DataError("unknown architecture id in " + path);
    m.spec.arch = static_cast<Arch>(arch);
    m.spec.input_h = r.i32();
    m.spec.input_w = r.i32();
    m.spec.input_c = r.i32();
    m.spec.classes = r.i32();
    const std::uint64_t nh = checked_count(r.u32(), kMaxHidden, "hidden layer", path);
    m.spec.hidden.resize(nh);
    for (auto& v : m.spec.hidden) v = r.i32();
    m.spec.init_seed = r.u64();
    m.spec.validate();
    const std::uint64_t dim = checked_count(r.u64(), kMaxDim, "parameter", path);
    if (dim != param_count(m.spec))
        throw DataError("parameter count does not match the model spec in " + path);
    m.params.resize(dim);
    r.f64s(m.params.data(), dim);
    r.expect_end();
    return m;
}

void save_ledger(const std::string& path, const ContributionLedger& ledger) {
    Writer w(path);
    write_header(w, ArtifactKind::Ledger);
    w.u64(ledger.dim);
    w.u32(static_cast<std::uint32_t>(ledger.client_ids.size()));
    for (std::size_t i = 0; i < ledger.client_ids.size(); ++i) {
        w.i32(ledger.client_ids[i]);
        w.i64(ledger.rounds_participated[i]);
    }
    for (const auto& sum : ledger.running_sum) {
        if (sum.size() != ledger.dim)
            throw ContractError("save_ledger: inconsistent ledger dimension");
        w.f64s(sum.data(), sum.size());
    }
    w.finish();
}

ContributionLedger load_ledger(const std::string& path) {
    Reader r(path);
    read_header(r, ArtifactKind::Ledger);
    ContributionLedger ledger;
    ledger.dim = checked_count(r.u64(), kMaxDim, "parameter", path);
    const std::uint64_t clients = checked_count(r.u32(), kMaxClients, "client", path);
    ledger.client_ids.resize(clients);
    ledger.rounds_participated.resize(clients);
    for (std::uint64_t i = 0; i < clients; ++i) {
        ledger.client_ids[i] = r.i32();
        ledger.rounds_participated[i] = static_cast<int>(r.i64());
    }
    ledger.running_sum.assign(clients, ParamVector(ledger.dim));
    for (auto& sum : ledger.running_sum) r.f64s(sum.data(), sum.size());
    r.expect_end();
    return ledger;
}

void save_store(const std::string& path, const RoundStore& store) {
    Writer w(path);
    write_header(w, ArtifactKind::RoundStore);
    w.u64(store.dim);
    w.u32(static_cast<std::uint32_t>(store.rounds.size()));
    for (const auto& round : store.rounds) {
        if (round.participants.size() != round.updates.size())
            throw ContractError("save_store: participants and updates disagree");
        w.i32(round.round);
        w.u32(static_cast<std::uint32_t>(round.participants.size()));
        for (int id : round.participants) w.i32(id);
        for (const auto& u : round.updates) {
            if (u.size() != store.dim)
                throw ContractError("save_store: inconsistent update dimension");
            w.f64s(u.data(), u.size());
        }
    }
    w.finish();
}

RoundStore load_store(const std::string& path) {
    Reader r(path);
    read_header(r, ArtifactKind::RoundStore);
    RoundStore store;
    store.dim = checked_count(r.u64(), kMaxDim, "parameter", path);
    const std::uint64_t rounds = checked_count(r.u32(), kMaxRounds, "round", path);
    store.rounds.resize(rounds);
    for (auto& round : store.rounds) {
        round.round = r.i32();
        const std::uint64_t k = checked_count(r.u32(), kMaxClients, "participant", path);
        round.participants.resize(k);
        for (auto& id : round.participants) id = r.i32();
        round.updates.assign(k, ParamVector(store.dim));
        for (auto& u : round.updates) r.f64s(u.data(), u.size());
    }
    r.expect_end();
    return store;
}

void append_line(const std::string& path, const std::string& line) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("cannot open for appending: " + path);
    out << line << '\n';
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

namespace {

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string q = "\"";
    for (char c : field) {
        if (c == '"') q += '"';
        q += c;
    }
    q += '"';
    return q;
}

} // namespace

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    auto emit = [&](const std::vector<std::string>& row) {
        if (row.size() != header.size())
            throw ContractError("write_csv: row width does not match the header");
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << csv_quote(row[i]);
        }
        out << '\n';
    };
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << csv_quote(header[i]);
    }
    out << '\n';
    for (const auto& row : rows) emit(row);
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

} // namespace fedul
