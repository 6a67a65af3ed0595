#pragma once

#include "errors.hpp"
#include "gibbs.hpp"
#include "linalg.hpp"
#include "model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace bcdl
{
  namespace fs = std::filesystem;

  inline constexpr const char* tool_version = "bcdl 1.0.0";

  // ---------------------------------------------------------------------
  // Number formatting

  /// Shortest decimal form that parses back to the same double.
  inline std::string
  format_double(double v)
  {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  }

  inline std::optional<double>
  parse_double(std::string_view s)
  {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
      s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.remove_suffix(1);
    if (!s.empty() && s.front() == '+')
      s.remove_prefix(1);
    if (s.empty())
      return std::nullopt;
    double v  = 0.0;
    auto res  = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
      return std::nullopt;
    return v;
  }

  // ---------------------------------------------------------------------
  // CSV

  /// Headerless numeric CSV, one record per line. Blank lines are skipped;
  /// errors name the 1-based line and column.
  inline Matrix
  read_csv(const fs::path& path)
  {
    std::ifstream in(path);
    if (!in)
      throw DataError(path.string() + ": cannot open");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line))
    {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos)
        continue;
      std::vector<double> row;
      std::size_t start = 0;
      for (std::size_t col = 1;; ++col)
      {
        std::size_t end = line.find(',', start);
        std::string_view cell(line.data() + start,
                              (end == std::string::npos ? line.size() : end) - start);
        auto v = parse_double(cell);
        if (!v)
          throw DataError(path.string() + ": row " + std::to_string(line_no) + ", column "
                          + std::to_string(col) + ": not a number: '" + std::string(cell)
                          + "'");
        row.push_back(*v);
        if (end == std::string::npos)
          break;
        start = end + 1;
      }
      if (!rows.empty() && row.size() != rows.front().size())
        throw DataError(path.string() + ": row " + std::to_string(line_no) + " has "
                        + std::to_string(row.size()) + " columns, expected "
                        + std::to_string(rows.front().size()));
      rows.push_back(std::move(row));
    }
    if (rows.empty())
      throw DataError(path.string() + ": no data rows");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return m;
  }

  inline void
  write_text(const fs::path& path, const std::string& text)
  {
    if (path.has_parent_path())
      fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
      throw DataError(path.string() + ": cannot write");
    out << text;
    if (!out)
      throw DataError(path.string() + ": write failed");
  }

  inline std::string
  read_text(const fs::path& path)
  {
    std::ifstream in(path, std::ios::binary);
    if (!in)
      throw DataError(path.string() + ": cannot open");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  inline std::string
  csv_text(const Matrix& m, const std::vector<std::string>& header = {})
  {
    std::string out;
    if (!header.empty())
    {
      for (std::size_t c = 0; c < header.size(); ++c)
        out += (c ? "," : "") + header[c];
      out += '\n';
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r)
    {
      for (Eigen::Index c = 0; c < m.cols(); ++c)
      {
        if (c)
          out += ',';
        out += format_double(m(r, c));
      }
      out += '\n';
    }
    return out;
  }

  inline void
  write_csv(const fs::path& path, const Matrix& m, const std::vector<std::string>& header = {})
  {
    write_text(path, csv_text(m, header));
  }

  /// Numbered column names: prefix0, prefix1, ...
  inline std::vector<std::string>
  numbered_header(const std::string& prefix, Eigen::Index count)
  {
    std::vector<std::string> h;
    for (Eigen::Index i = 0; i < count; ++i)
      h.push_back(prefix + std::to_string(i));
    return h;
  }

  // ---------------------------------------------------------------------
  // Datasets

  /// Per-feature centering and scaling of the inputs.
  struct Standardizer
  {
    Vector center;
    Vector scale;

    static Standardizer
    fit(const Matrix& x)
    {
      Standardizer s;
      const double n = static_cast<double>(x.cols());
      s.center = x.rowwise().mean();
      s.scale.resize(x.rows());
      for (Eigen::Index r = 0; r < x.rows(); ++r)
      {
        double var = (x.row(r).array() - s.center(r)).square().sum() / n;
        s.scale(r) = var > 0.0 ? std::sqrt(var) : 1.0;
      }
      return s;
    }

    Matrix
    apply(const Matrix& x) const
    {
      require_dims(x.rows() == center.size(), "standardizer: feature count mismatch");
      return (x.colwise() - center).array().colwise() / scale.array();
    }
  };

  /// Loads paired CSVs (one sample per row) and transposes them to one
  /// sample per column.
  inline Dataset
  load_dataset(const fs::path& x_path, const fs::path& y_path)
  {
    Matrix x = read_csv(x_path);
    Matrix y = read_csv(y_path);
    if (x.rows() != y.rows())
      throw PairingMismatch(static_cast<std::size_t>(x.rows()), static_cast<std::size_t>(y.rows()));
    Dataset d;
    d.x = x.transpose();
    d.y = y.transpose();
    d.validate();
    return d;
  }

  /// Inputs only, one sample per column.
  inline Matrix
  load_inputs(const fs::path& x_path)
  {
    return read_csv(x_path).transpose();
  }

  // ---------------------------------------------------------------------
  // Digests and manifests

  inline std::uint64_t
  fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL)
  {
    for (unsigned char c : bytes)
    {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  inline std::string
  hex_digest(std::uint64_t h)
  {
    char buf[17];
    auto res = std::to_chars(buf, buf + 16, h, 16);
    std::string s(buf, res.ptr);
    return std::string(16 - s.size(), '0') + s;
  }

  inline std::string
  file_digest(const fs::path& path)
  {
    return hex_digest(fnv1a64(read_text(path)));
  }

  /// key=value lines, keys sorted.
  struct RunManifest
  {
    std::map<std::string, std::string> entries;

    void set(const std::string& key, const std::string& value) { entries[key] = value; }
    void set(const std::string& key, double value) { entries[key] = format_double(value); }
    void set(const std::string& key, std::uint64_t value) { entries[key] = std::to_string(value); }
    void set(const std::string& key, std::int64_t value) { entries[key] = std::to_string(value); }

    bool has(const std::string& key) const { return entries.count(key) > 0; }

    const std::string&
    get(const std::string& key) const
    {
      auto it = entries.find(key);
      if (it == entries.end())
        throw DataError("manifest: missing key '" + key + "'");
      return it->second;
    }

    double
    get_double(const std::string& key) const
    {
      auto v = parse_double(get(key));
      if (!v)
        throw DataError("manifest: '" + key + "' is not a number");
      return *v;
    }

    std::uint64_t
    get_uint(const std::string& key) const
    {
      const std::string& s = get(key);
      std::uint64_t v = 0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw DataError("manifest: '" + key + "' is not a non-negative integer");
      return v;
    }

    std::string
    text() const
    {
      std::string out;
      for (const auto& [k, v] : entries)
        out += k + "=" + v + "\n";
      return out;
    }

    static RunManifest
    parse(const std::string& text)
    {
      RunManifest m;
      std::istringstream in(text);
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line))
      {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
          line.pop_back();
        if (line.empty())
          continue;
        auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0)
          throw DataError("manifest: line " + std::to_string(line_no) + " is not key=value");
        m.entries[line.substr(0, eq)] = line.substr(eq + 1);
      }
      return m;
    }
  };

  inline void
  record_model_config(RunManifest& m, const ModelConfig& cfg)
  {
    m.set("dict_size", static_cast<std::int64_t>(cfg.dict_size));
    const HyperParams& h = cfg.hyper;
    m.set("hyper.a_s", h.a_s);
    m.set("hyper.b_s", h.b_s);
    m.set("hyper.a_xy", h.a_xy);
    m.set("hyper.b_xy", h.b_xy);
    m.set("hyper.a_x", h.a_x);
    m.set("hyper.b_x", h.b_x);
    m.set("hyper.a_y", h.a_y);
    m.set("hyper.b_y", h.b_y);
    m.set("kernel", std::string("exponential"));
    m.set("eta_mode", std::string(cfg.kernel.eta ? "explicit" : "auto"));
  }

  inline ModelConfig
  read_model_config(const RunManifest& m)
  {
    ModelConfig cfg;
    cfg.dict_size = static_cast<Eigen::Index>(m.get_uint("dict_size"));
    HyperParams& h = cfg.hyper;
    h.a_s  = m.get_double("hyper.a_s");
    h.b_s  = m.get_double("hyper.b_s");
    h.a_xy = m.get_double("hyper.a_xy");
    h.b_xy = m.get_double("hyper.b_xy");
    h.a_x  = m.get_double("hyper.a_x");
    h.b_x  = m.get_double("hyper.b_x");
    h.a_y  = m.get_double("hyper.a_y");
    h.b_y  = m.get_double("hyper.b_y");
    if (m.get("eta_mode") == "explicit")
      cfg.kernel.eta = m.get_double("eta");
    return cfg;
  }

  inline void
  record_sampler_config(RunManifest& m, const SamplerConfig& s)
  {
    m.set("burn_in", static_cast<std::uint64_t>(s.burn_in));
    m.set("collect", static_cast<std::uint64_t>(s.collect));
    m.set("thin", static_cast<std::uint64_t>(s.thin));
    m.set("seed", s.seed);
  }

  inline SamplerConfig
  read_sampler_config(const RunManifest& m)
  {
    SamplerConfig s;
    s.burn_in = m.get_uint("burn_in");
    s.collect = m.get_uint("collect");
    s.thin    = m.get_uint("thin");
    s.seed    = m.get_uint("seed");
    return s;
  }

  // ---------------------------------------------------------------------
  // Model archive

  struct ModelArchive
  {
    RunManifest manifest;
    PosteriorSamples posterior;
    /// Training inputs (one sample per column) after any standardization.
    Matrix train_x;
    std::optional<Standardizer> standardizer;
  };

  inline Matrix
  to_real(const IntMatrix& m)
  {
    return m.cast<double>();
  }

  inline IntMatrix
  to_sign(const Matrix& m, const std::string& what)
  {
    IntMatrix out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i)
    {
      double v = m.data()[i];
      if (v != 1.0 && v != -1.0)
        throw DataError(what + ": entries must be -1 or +1");
      out.data()[i] = static_cast<int>(v);
    }
    return out;
  }

  inline fs::path
  sample_dir(const fs::path& dir, std::size_t l)
  {
    return dir / ("sample_" + std::to_string(l));
  }

  /// Writes manifest.txt, train_x.csv, trace.csv, accept.csv and
  /// sample_<l>/{z,s,w,dx,dy,gammas}.csv. Matrices keep their in-memory
  /// orientation.
  inline void
  save_model(const fs::path& dir, const ModelArchive& a)
  {
    const PosteriorSamples& p = a.posterior;
    if (p.states.empty())
      throw InvalidArgument("save_model: posterior has no samples");
    fs::create_directories(dir);

    RunManifest m = a.manifest;
    const LatentState& first = p.states.front();
    m.set("retained", static_cast<std::uint64_t>(p.states.size()));
    m.set("dict_size", static_cast<std::int64_t>(first.dict_size()));
    m.set("n", static_cast<std::int64_t>(first.n()));
    m.set("m_x", static_cast<std::int64_t>(first.dx.rows()));
    m.set("m_y", static_cast<std::int64_t>(first.dy.rows()));
    m.set("eta", p.eta);
    m.set("jitter_applied", p.jitter_applied);
    m.set("accept_rate", p.accept_rate);
    m.set("standardize_x", std::string(a.standardizer ? "1" : "0"));
    if (!m.has("tool_version"))
      m.set("tool_version", std::string(tool_version));

    write_csv(dir / "train_x.csv", a.train_x);
    if (a.standardizer)
    {
      write_csv(dir / "x_center.csv", a.standardizer->center);
      write_csv(dir / "x_scale.csv", a.standardizer->scale);
    }

    std::string trace = "sweep,log_density,accept_rate\n";
    for (std::size_t i = 0; i < p.log_density_trace.size(); ++i)
      trace += std::to_string(i) + "," + format_double(p.log_density_trace[i]) + ","
               + format_double(i < p.accept_trace.size() ? p.accept_trace[i] : 0.0) + "\n";
    write_text(dir / "trace.csv", trace);

    std::string accept = "atom,accept_rate\n";
    for (std::size_t k = 0; k < p.atom_accept_rate.size(); ++k)
      accept += std::to_string(k) + "," + format_double(p.atom_accept_rate[k]) + "\n";
    write_text(dir / "accept.csv", accept);

    for (std::size_t l = 0; l < p.states.size(); ++l)
    {
      const LatentState& st = p.states[l];
      fs::path sd = sample_dir(dir, l);
      write_csv(sd / "z.csv", to_real(st.z));
      write_csv(sd / "s.csv", st.s);
      write_csv(sd / "w.csv", st.w);
      write_csv(sd / "dx.csv", st.dx);
      write_csv(sd / "dy.csv", st.dy);
      Matrix g(1, 4);
      g << st.gamma_s, st.gamma_xy, st.gamma_x, st.gamma_y;
      write_csv(sd / "gammas.csv", g, {"gamma_s", "gamma_xy", "gamma_x", "gamma_y"});
    }
    // Written last so a complete manifest marks a complete archive.
    write_text(dir / "manifest.txt", m.text());
  }

  namespace detail
  {
    inline std::vector<std::vector<double>>
    read_table(const fs::path& path, std::size_t columns)
    {
      std::istringstream in(read_text(path));
      std::string line;
      std::vector<std::vector<double>> rows;
      std::getline(in, line);
      std::size_t line_no = 1;
      while (std::getline(in, line))
      {
        ++line_no;
        if (line.empty())
          continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ','))
        {
          auto v = parse_double(cell);
          if (!v)
            throw DataError(path.string() + ": row " + std::to_string(line_no)
                            + ": not a number");
          row.push_back(*v);
        }
        if (row.size() != columns)
          throw DataError(path.string() + ": row " + std::to_string(line_no)
                          + ": wrong column count");
        rows.push_back(std::move(row));
      }
      return rows;
    }

    inline Matrix
    read_shaped(const fs::path& path, Eigen::Index rows, Eigen::Index cols)
    {
      Matrix m = read_csv(path);
      if (m.rows() != rows || m.cols() != cols)
        throw DataError(path.string() + ": expected " + std::to_string(rows) + "x"
                        + std::to_string(cols) + " but found " + std::to_string(m.rows()) + "x"
                        + std::to_string(m.cols()) + " (dimension mismatch vs manifest)");
      return m;
    }
  }

  inline ModelArchive
  load_model(const fs::path& dir)
  {
    if (!fs::exists(dir / "manifest.txt"))
      throw DataError(dir.string() + ": missing manifest.txt");
    ModelArchive a;
    a.manifest = RunManifest::parse(read_text(dir / "manifest.txt"));
    const RunManifest& m = a.manifest;
    const auto retained = m.get_uint("retained");
    const auto k        = static_cast<Eigen::Index>(m.get_uint("dict_size"));
    const auto n        = static_cast<Eigen::Index>(m.get_uint("n"));
    const auto m_x      = static_cast<Eigen::Index>(m.get_uint("m_x"));
    const auto m_y      = static_cast<Eigen::Index>(m.get_uint("m_y"));
    if (retained == 0 || k < 1 || n < 1 || m_x < 1 || m_y < 1)
      throw DataError("manifest: sizes must be positive");

    PosteriorSamples& p = a.posterior;
    p.eta            = m.get_double("eta");
    p.jitter_applied = m.get_double("jitter_applied");
    p.accept_rate    = m.get_double("accept_rate");

    a.train_x = detail::read_shaped(dir / "train_x.csv", m_x, n);
    if (m.get("standardize_x") == "1")
    {
      Standardizer s;
      s.center    = detail::read_shaped(dir / "x_center.csv", m_x, 1);
      s.scale     = detail::read_shaped(dir / "x_scale.csv", m_x, 1);
      a.standardizer = std::move(s);
    }

    for (const auto& row : detail::read_table(dir / "trace.csv", 3))
    {
      p.log_density_trace.push_back(row[1]);
      p.accept_trace.push_back(row[2]);
    }
    auto accept = detail::read_table(dir / "accept.csv", 2);
    if (accept.size() != static_cast<std::size_t>(k))
      throw DataError("accept.csv: expected one row per atom (dimension mismatch vs manifest)");
    for (const auto& row : accept)
      p.atom_accept_rate.push_back(row[1]);

    for (std::size_t l = 0; l < retained; ++l)
    {
      fs::path sd = sample_dir(dir, l);
      LatentState st;
      st.z  = to_sign(detail::read_shaped(sd / "z.csv", k, n), (sd / "z.csv").string());
      st.s  = detail::read_shaped(sd / "s.csv", k, n);
      st.w  = detail::read_shaped(sd / "w.csv", n, k);
      st.dx = detail::read_shaped(sd / "dx.csv", m_x, k);
      st.dy = detail::read_shaped(sd / "dy.csv", m_y, k);
      auto g = detail::read_table(sd / "gammas.csv", 4);
      if (g.size() != 1)
        throw DataError((sd / "gammas.csv").string() + ": expected one row");
      st.gamma_s  = g[0][0];
      st.gamma_xy = g[0][1];
      st.gamma_x  = g[0][2];
      st.gamma_y  = g[0][3];
      try
      {
        st.validate(n, m_x, m_y);
      }
      catch (const Error& e)
      {
        throw DataError(sd.string() + ": " + e.what());
      }
      p.states.push_back(std::move(st));
    }
    return a;
  }

  /// Digest over every regular file of an archive (sorted relative paths
  /// and contents).
  inline std::string
  archive_digest(const fs::path& dir)
  {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file())
        files.push_back(fs::relative(e.path(), dir));
    if (files.empty())
      throw DataError(dir.string() + ": empty archive");
    std::sort(files.begin(), files.end());
    std::uint64_t h = fnv1a64("");
    for (const auto& f : files)
    {
      h = fnv1a64(f.generic_string(), h);
      h = fnv1a64(std::string_view("\0", 1), h);
      h = fnv1a64(read_text(dir / f), h);
    }
    return hex_digest(h);
  }
}
