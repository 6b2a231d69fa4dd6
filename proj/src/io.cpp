#include "apafa/io.hpp"

#include "apafa/identifiability.hpp"
#include "apafa/model.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace apafa {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'A', 'P', 'A', 'F', 'D', 'R', 'W', 'S'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}
void put_f64(std::string& buf, double v) { put_u64(buf, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t count) const {
        if (pos + count > buf.size()) throw usage_error("draws archive truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + b])) << (8 * b);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + b])) << (8 * b);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
};

void put_matrix(std::string& buf, const Matrix& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) put_f64(buf, m(r, c));
}
Matrix get_matrix(Reader& rd, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rd.f64();
    return m;
}
void put_vector(std::string& buf, const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(buf, v(i));
}
Vector get_vector(Reader& rd, Eigen::Index size) {
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = rd.f64();
    return v;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return Matrix(0, 0);
    const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    return m;
}

json vector_to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Vector vector_from_json(const json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

}  // namespace

void atomic_write_file(const std::filesystem::path& path, const std::string& contents) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

CsvDataset read_dataset_csv(const std::filesystem::path& path, bool strict_labels,
                            OutcomeKind kind) {
    std::ifstream in(path);
    if (!in) throw usage_error("cannot open data file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw usage_error("empty data file: " + path.string());

    const std::vector<std::string> header = split(trim(line), ',');
    int group_col = -1;
    std::vector<std::string> declared;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name = trim(header[c]);
        if (name == "group" || name.rfind("group:", 0) == 0) {
            group_col = static_cast<int>(c);
            if (name.rfind("group:", 0) == 0) {
                for (const std::string& lab : split(name.substr(6), '|'))
                    if (!lab.empty()) declared.push_back(lab);
            }
            break;
        }
    }
    if (group_col <= 0)
        throw usage_error("data file needs outcome columns followed by a `group` column");
    if (strict_labels && declared.empty())
        throw usage_error("--strict-labels requires a label set in the group header "
                          "(group:lab1|lab2|...)");
    const int p = group_col;
    const int q = static_cast<int>(header.size()) - group_col - 1;

    std::vector<std::vector<double>> yrows;
    std::vector<std::vector<bool>> mrows;
    std::vector<std::vector<double>> zrows;
    std::vector<std::string> labels = declared;
    std::vector<int> groups;

    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const std::vector<std::string> cells = split(line, ',');
        if (cells.size() != header.size()) {
            std::ostringstream ss;
            ss << path.string() << ":" << lineno << ": expected " << header.size()
               << " fields, got " << cells.size();
            throw usage_error(ss.str());
        }
        std::vector<double> y(p);
        std::vector<bool> miss(p);
        for (int j = 0; j < p; ++j) {
            const std::string cell = trim(cells[j]);
            if (cell.empty()) {
                y[j] = std::numeric_limits<double>::quiet_NaN();
                miss[j] = true;
            } else {
                try {
                    std::size_t used = 0;
                    y[j] = std::stod(cell, &used);
                    if (used != cell.size()) throw std::invalid_argument(cell);
                } catch (const std::exception&) {
                    std::ostringstream ss;
                    ss << path.string() << ":" << lineno << ": bad numeric value '" << cell
                       << "'";
                    throw usage_error(ss.str());
                }
                if (kind == OutcomeKind::binary && y[j] != 0.0 && y[j] != 1.0) {
                    std::ostringstream ss;
                    ss << path.string() << ":" << lineno
                       << ": binary outcome must be 0 or 1, got '" << cell << "'";
                    throw usage_error(ss.str());
                }
                miss[j] = false;
            }
        }
        const std::string label = trim(cells[group_col]);
        if (label.empty()) {
            std::ostringstream ss;
            ss << path.string() << ":" << lineno << ": empty group label";
            throw usage_error(ss.str());
        }
        int g = -1;
        for (std::size_t t = 0; t < labels.size(); ++t)
            if (labels[t] == label) g = static_cast<int>(t);
        if (g < 0) {
            if (strict_labels) {
                std::ostringstream ss;
                ss << path.string() << ":" << lineno << ": group label '" << label
                   << "' not in the declared label set";
                throw usage_error(ss.str());
            }
            g = static_cast<int>(labels.size());
            labels.push_back(label);
        }
        std::vector<double> z(q);
        for (int c = 0; c < q; ++c) {
            const std::string cell = trim(cells[group_col + 1 + c]);
            try {
                z[c] = std::stod(cell);
            } catch (const std::exception&) {
                std::ostringstream ss;
                ss << path.string() << ":" << lineno << ": bad covariate value '" << cell << "'";
                throw usage_error(ss.str());
            }
        }
        yrows.push_back(std::move(y));
        mrows.push_back(std::move(miss));
        zrows.push_back(std::move(z));
        groups.push_back(g);
    }
    if (yrows.empty()) throw usage_error("data file has no rows: " + path.string());

    const int n = static_cast<int>(yrows.size());
    const int S = static_cast<int>(labels.size());
    CsvDataset out;
    out.group_labels = labels;
    out.data.Y.resize(n, p);
    out.data.missing_mask = BoolMatrix::Constant(n, p, false);
    out.data.X = Matrix::Zero(n, S);
    out.data.Z.resize(n, q);
    out.data.outcome_kind = kind;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) {
            out.data.Y(i, j) = yrows[i][j];
            out.data.missing_mask(i, j) = mrows[i][j];
        }
        out.data.X(i, groups[i]) = 1.0;
        for (int c = 0; c < q; ++c) out.data.Z(i, c) = zrows[i][c];
    }
    return out;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data,
                       const std::vector<std::string>& group_labels) {
    std::ostringstream out;
    out.precision(17);
    for (Eigen::Index j = 0; j < data.p(); ++j) out << "y" << (j + 1) << ",";
    out << "group";
    for (Eigen::Index c = 0; c < data.q(); ++c) out << ",z" << (c + 1);
    out << "\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        for (Eigen::Index j = 0; j < data.p(); ++j) {
            if (data.missing_mask.size() > 0 && data.missing_mask(i, j))
                out << ",";
            else
                out << data.Y(i, j) << ",";
        }
        out << group_labels[static_cast<std::size_t>(data.group_of(i))];
        for (Eigen::Index c = 0; c < data.q(); ++c) out << "," << data.Z(i, c);
        out << "\n";
    }
    atomic_write_file(path, out.str());
}

FitConfig parse_config_text(const std::string& text) {
    FitConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw usage_error("config line " + std::to_string(lineno) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto as_double = [&]() {
            try {
                return std::stod(value);
            } catch (const std::exception&) {
                throw usage_error("config key " + key + ": bad numeric value '" + value + "'");
            }
        };
        auto as_int = [&]() { return static_cast<int>(as_double()); };

        if (key == "alpha_eta") cfg.hyper.alpha_eta = as_double();
        else if (key == "alpha_phi") cfg.hyper.alpha_phi = as_double();
        else if (key == "a_lambda") cfg.hyper.a_lambda = as_double();
        else if (key == "b_lambda") cfg.hyper.b_lambda = as_double();
        else if (key == "a_gamma") cfg.hyper.a_gamma = as_double();
        else if (key == "b_gamma") cfg.hyper.b_gamma = as_double();
        else if (key == "a_sigma") cfg.hyper.a_sigma = as_double();
        else if (key == "b_sigma") cfg.hyper.b_sigma = as_double();
        else if (key == "beta_prior_scale_numerator")
            cfg.hyper.beta_prior_scale_numerator = as_double();
        else if (key == "d_max") { cfg.hyper.d_max = as_int(); cfg.hyper_dims_set = true; }
        else if (key == "k_max") { cfg.hyper.k_max = as_int(); cfg.hyper_dims_set = true; }
        else if (key == "spike_value") cfg.hyper.spike_value = as_double();
        else if (key == "adapt_a0") cfg.hyper.adapt_a0 = as_double();
        else if (key == "adapt_a1") cfg.hyper.adapt_a1 = as_double();
        else if (key == "iterations") cfg.chain.iterations = as_int();
        else if (key == "burn_in") cfg.chain.burn_in = as_int();
        else if (key == "thinning") cfg.chain.thinning = as_int();
        else if (key == "seed") cfg.chain.seed = static_cast<std::uint64_t>(as_double());
        else if (key == "adapt_start") cfg.chain.adapt_start = as_int();
        else if (key == "adapt_end") cfg.chain.adapt_end = as_int();
        else if (key == "rw_step") cfg.chain.rw_step = as_double();
        else if (key == "init_active") cfg.chain.init_active = as_int();
        else if (key == "restarts") cfg.chain.restarts = as_int();
        else if (key == "restart_warmup") cfg.chain.restart_warmup = as_int();
        else if (key == "init_strategy") {
            if (value == "data_driven") cfg.chain.init_strategy = InitStrategy::data_driven;
            else if (value == "prior") cfg.chain.init_strategy = InitStrategy::prior;
            else throw usage_error("config key init_strategy: expected data_driven|prior");
        } else if (key == "beta_update") {
            if (value == "augmentation") cfg.chain.beta_update = BetaUpdateKind::augmentation;
            else if (value == "random_walk") cfg.chain.beta_update = BetaUpdateKind::random_walk;
            else throw usage_error("config key beta_update: expected augmentation|random_walk");
        } else {
            throw usage_error("config: unknown key '" + key + "'");
        }
    }
    return cfg;
}

FitConfig read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw usage_error("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void write_draws_archive(const std::filesystem::path& path, const PosteriorDraws& draws,
                         const Dataset& data) {
    const bool probit = data.outcome_kind == OutcomeKind::binary;
    std::string buf;
    buf.reserve(1 << 20);
    buf.append(kMagic, sizeof(kMagic));
    put_u32(buf, kVersion);
    put_u32(buf, probit ? 1u : 0u);
    put_u64(buf, static_cast<std::uint64_t>(data.n()));
    put_u64(buf, static_cast<std::uint64_t>(data.p()));
    put_u64(buf, static_cast<std::uint64_t>(data.S()));
    put_u64(buf, static_cast<std::uint64_t>(data.q()));
    put_u64(buf, static_cast<std::uint64_t>(draws.states.size()));
    put_u64(buf, static_cast<std::uint64_t>(draws.heldout_cells.size()));
    for (const auto& [i, j] : draws.heldout_cells) {
        put_u64(buf, static_cast<std::uint64_t>(i));
        put_u64(buf, static_cast<std::uint64_t>(j));
    }
    put_u64(buf, draws.meta.seed);
    put_u64(buf, static_cast<std::uint64_t>(draws.meta.iterations));
    put_u64(buf, static_cast<std::uint64_t>(draws.meta.burn_in));
    put_u64(buf, static_cast<std::uint64_t>(draws.meta.thinning));

    json index;
    index["n_draws"] = draws.states.size();
    index["offsets"] = json::array();
    index["d"] = json::array();
    index["k"] = json::array();
    index["d_active"] = json::array();
    index["k_active"] = json::array();
    index["meta"] = {{"seed", draws.meta.seed},
                     {"iterations", draws.meta.iterations},
                     {"burn_in", draws.meta.burn_in},
                     {"thinning", draws.meta.thinning},
                     {"runtime_seconds", draws.meta.runtime_seconds}};

    for (std::size_t t = 0; t < draws.states.size(); ++t) {
        const ModelState& st = draws.states[t];
        index["offsets"].push_back(buf.size());
        index["d"].push_back(st.d());
        index["k"].push_back(st.k());
        index["d_active"].push_back(draws.active_counts[t].first);
        index["k_active"].push_back(draws.active_counts[t].second);

        put_u64(buf, static_cast<std::uint64_t>(st.d()));
        put_u64(buf, static_cast<std::uint64_t>(st.k()));
        put_u64(buf, static_cast<std::uint64_t>(draws.active_counts[t].first));
        put_u64(buf, static_cast<std::uint64_t>(draws.active_counts[t].second));
        put_matrix(buf, st.Lambda);
        put_matrix(buf, st.Gamma);
        put_matrix(buf, st.Eta);
        put_matrix(buf, st.PhiTilde);
        put_matrix(buf, st.Psi);
        put_matrix(buf, st.Beta);
        put_vector(buf, st.sigma2);
        put_vector(buf, st.zeta_lambda);
        put_vector(buf, st.zeta_gamma);
        put_vector(buf, st.tau_eta);
        put_vector(buf, st.tau_phi);
        put_vector(buf, st.stick_v_eta);
        put_vector(buf, st.stick_v_phi);
        for (Eigen::Index h = 0; h < st.d(); ++h)
            put_u64(buf, static_cast<std::uint64_t>(st.cusp_indicator_eta(h)));
        for (Eigen::Index h = 0; h < st.k(); ++h)
            put_u64(buf, static_cast<std::uint64_t>(st.cusp_indicator_phi(h)));
        if (probit) put_matrix(buf, st.ProbitZ);
        if (draws.heldout_cells.size() > 0)
            put_vector(buf, draws.imputed.row(static_cast<Eigen::Index>(t)).transpose());
    }

    atomic_write_file(path, buf);
    std::filesystem::path index_path = path;
    index_path.replace_extension(".index.json");
    atomic_write_file(index_path, index.dump(2) + "\n");
}

PosteriorDraws read_draws_archive(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw usage_error("cannot open draws archive: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string buf = ss.str();
    Reader rd{buf};

    rd.need(sizeof(kMagic));
    if (buf.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0)
        throw usage_error("not a draws archive: " + path.string());
    rd.pos = sizeof(kMagic);
    const std::uint32_t version = rd.u32();
    if (version != kVersion) throw usage_error("unsupported draws archive version");
    const std::uint32_t flags = rd.u32();
    const bool probit = (flags & 1u) != 0;
    const auto n = static_cast<Eigen::Index>(rd.u64());
    const auto p = static_cast<Eigen::Index>(rd.u64());
    const auto S = static_cast<Eigen::Index>(rd.u64());
    const auto q = static_cast<Eigen::Index>(rd.u64());
    const auto n_draws = rd.u64();
    const auto n_held = rd.u64();

    PosteriorDraws draws;
    draws.heldout_cells.reserve(n_held);
    for (std::uint64_t c = 0; c < n_held; ++c) {
        const int i = static_cast<int>(rd.u64());
        const int j = static_cast<int>(rd.u64());
        draws.heldout_cells.emplace_back(i, j);
    }
    draws.meta.seed = rd.u64();
    draws.meta.iterations = static_cast<int>(rd.u64());
    draws.meta.burn_in = static_cast<int>(rd.u64());
    draws.meta.thinning = static_cast<int>(rd.u64());

    draws.imputed.resize(static_cast<Eigen::Index>(n_draws),
                         static_cast<Eigen::Index>(n_held));
    for (std::uint64_t t = 0; t < n_draws; ++t) {
        const auto d = static_cast<Eigen::Index>(rd.u64());
        const auto k = static_cast<Eigen::Index>(rd.u64());
        const int d_active = static_cast<int>(rd.u64());
        const int k_active = static_cast<int>(rd.u64());
        ModelState st;
        st.Lambda = get_matrix(rd, p, d);
        st.Gamma = get_matrix(rd, p, k);
        st.Eta = get_matrix(rd, n, d);
        st.PhiTilde = get_matrix(rd, n, k);
        st.Psi = get_matrix(rd, n, k);
        st.Beta = get_matrix(rd, S + q, k);
        st.sigma2 = get_vector(rd, p);
        st.zeta_lambda = get_vector(rd, d);
        st.zeta_gamma = get_vector(rd, k);
        st.tau_eta = get_vector(rd, d);
        st.tau_phi = get_vector(rd, k);
        st.stick_v_eta = get_vector(rd, d);
        st.stick_v_phi = get_vector(rd, k);
        st.cusp_indicator_eta.resize(d);
        for (Eigen::Index h = 0; h < d; ++h)
            st.cusp_indicator_eta(h) = static_cast<int>(rd.u64());
        st.cusp_indicator_phi.resize(k);
        for (Eigen::Index h = 0; h < k; ++h)
            st.cusp_indicator_phi(h) = static_cast<int>(rd.u64());
        if (probit) st.ProbitZ = get_matrix(rd, n, p);
        if (n_held > 0)
            draws.imputed.row(static_cast<Eigen::Index>(t)) =
                get_vector(rd, static_cast<Eigen::Index>(n_held)).transpose();
        draws.states.push_back(std::move(st));
        draws.active_counts.emplace_back(d_active, k_active);
    }
    if (rd.pos != buf.size()) throw usage_error("draws archive has trailing bytes");

    // runtime lives only in the companion index so the archive itself is a
    // pure function of seed and configuration
    std::filesystem::path index_path = path;
    index_path.replace_extension(".index.json");
    std::ifstream idx(index_path);
    if (idx) {
        try {
            json j;
            idx >> j;
            draws.meta.runtime_seconds = j.at("meta").at("runtime_seconds").get<double>();
        } catch (const json::exception&) {
            // companion missing or malformed: leave runtime at zero
        }
    }
    return draws;
}

void write_truth_json(const std::filesystem::path& path, const SyntheticTruth& truth) {
    json j;
    j["lambda_true"] = matrix_to_json(truth.Lambda_true);
    j["gamma_true"] = matrix_to_json(truth.Gamma_true);
    j["psi_true"] = matrix_to_json(truth.Psi_true);
    j["sigma2_true"] = vector_to_json(truth.sigma2_true);
    j["omega_by_group"] = json::array();
    for (const Matrix& om : truth.Omega_by_group)
        j["omega_by_group"].push_back(matrix_to_json(om));
    j["group_labels"] = truth.group_labels;
    j["study_labels"] = truth.study_labels;
    atomic_write_file(path, j.dump(2) + "\n");
}

SyntheticTruth read_truth_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw usage_error("cannot open truth file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw usage_error("bad truth file " + path.string() + ": " + e.what());
    }
    SyntheticTruth truth;
    truth.Lambda_true = matrix_from_json(j.at("lambda_true"));
    truth.Gamma_true = matrix_from_json(j.at("gamma_true"));
    truth.Psi_true = matrix_from_json(j.at("psi_true"));
    truth.sigma2_true = vector_from_json(j.at("sigma2_true"));
    for (const auto& om : j.at("omega_by_group"))
        truth.Omega_by_group.push_back(matrix_from_json(om));
    truth.group_labels = j.at("group_labels").get<std::vector<int>>();
    truth.study_labels = j.at("study_labels").get<std::vector<int>>();
    if (truth.Psi_true.size() > 0 && truth.Gamma_true.cols() != truth.Psi_true.cols())
        throw usage_error("truth file: gamma/psi column mismatch");
    return truth;
}

void write_summary_json(const std::filesystem::path& path, const PosteriorSummary& summary,
                        const PosteriorDraws& draws, const std::vector<int>& switching_flags) {
    json j;
    j["d_mean"] = summary.d_mean;
    j["d_iqr"] = summary.d_iqr;
    j["k_mean"] = summary.k_mean;
    j["k_iqr"] = summary.k_iqr;
    j["psi_bar"] = matrix_to_json(summary.psi_bar);
    j["lambda_mean"] = matrix_to_json(summary.lambda_mean);
    j["gamma_mean"] = matrix_to_json(summary.gamma_mean);
    j["information_switching_columns"] = switching_flags;
    j["n_draws"] = draws.states.size();
    atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace apafa
