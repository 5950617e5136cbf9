// SPDX-License-Identifier: Apache-2.0

#ifndef PIEZOCTRL_IO_HPP
#define PIEZOCTRL_IO_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "piezoctrl/control.hpp"
#include "piezoctrl/fespace.hpp"
#include "piezoctrl/mesh.hpp"

namespace piezoctrl
{

class ConfigError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

//
// Flat "key = value" file; '#' starts a comment. Typed getters throw ConfigError.
//
class KeyValueConfig
{
public:
  KeyValueConfig() = default;

  static KeyValueConfig Parse(std::istream &in)
  {
    KeyValueConfig c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line))
    {
      lineno++;
      if (auto h = line.find('#'); h != std::string::npos)
      {
        line.erase(h);
      }
      const std::string s = Trim(line);
      if (s.empty())
      {
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos)
      {
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = Trim(s.substr(0, eq));
      if (key.empty())
      {
        throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      }
      c.values_[key] = Trim(s.substr(eq + 1));
    }
    return c;
  }

  static KeyValueConfig Load(const std::string &path)
  {
    std::ifstream in(path);
    if (!in)
    {
      throw ConfigError("cannot open config file " + path);
    }
    return Parse(in);
  }

  bool Has(const std::string &key) const { return values_.count(key) > 0; }
  void Set(const std::string &key, const std::string &value) { values_[key] = value; }
  const std::map<std::string, std::string> &Values() const { return values_; }

  std::string GetString(const std::string &key, const std::string &def) const
  {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  double GetDouble(const std::string &key, double def) const
  {
    auto it = values_.find(key);
    if (it == values_.end())
    {
      return def;
    }
    const std::string &v = it->second;
    if (v == "inf" || v == "+inf")
    {
      return std::numeric_limits<double>::infinity();
    }
    if (v == "-inf")
    {
      return -std::numeric_limits<double>::infinity();
    }
    try
    {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size())
      {
        throw std::invalid_argument(v);
      }
      return d;
    }
    catch (const std::exception &)
    {
      throw ConfigError("key '" + key + "': not a number: '" + v + "'");
    }
  }

  int GetInt(const std::string &key, int def) const
  {
    auto it = values_.find(key);
    if (it == values_.end())
    {
      return def;
    }
    try
    {
      std::size_t pos = 0;
      const int i = std::stoi(it->second, &pos);
      if (pos != it->second.size())
      {
        throw std::invalid_argument(it->second);
      }
      return i;
    }
    catch (const std::exception &)
    {
      throw ConfigError("key '" + key + "': not an integer: '" + it->second + "'");
    }
  }

  std::vector<int> GetIntList(const std::string &key, std::vector<int> def) const
  {
    auto it = values_.find(key);
    if (it == values_.end())
    {
      return def;
    }
    std::vector<int> out;
    std::string item;
    std::stringstream ss(it->second);
    while (std::getline(ss, item, ','))
    {
      item = Trim(item);
      if (item.empty())
      {
        continue;
      }
      try
      {
        out.push_back(std::stoi(item));
      }
      catch (const std::exception &)
      {
        throw ConfigError("key '" + key + "': bad integer list");
      }
    }
    return out;
  }

  std::vector<double> GetDoubleList(const std::string &key, std::vector<double> def) const
  {
    auto it = values_.find(key);
    if (it == values_.end())
    {
      return def;
    }
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ','))
    {
      item = Trim(item);
      std::size_t pos = 0;
      try
      {
        out.push_back(std::stod(item, &pos));
      }
      catch (const std::exception &)
      {
        pos = std::string::npos;
      }
      if (pos != item.size())
      {
        throw ConfigError("key '" + key + "': bad number list");
      }
    }
    return out;
  }

  bool GetBool(const std::string &key, bool def) const
  {
    auto it = values_.find(key);
    if (it == values_.end())
    {
      return def;
    }
    const std::string &v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on")
    {
      return true;
    }
    if (v == "0" || v == "false" || v == "no" || v == "off")
    {
      return false;
    }
    throw ConfigError("key '" + key + "': not a boolean: '" + v + "'");
  }

private:
  std::map<std::string, std::string> values_;

  static std::string Trim(const std::string &s)
  {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
    {
      return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
};

//
// Minimal CSV table: header plus rows of numbers or strings.
//
class CsvTable
{
public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void AddRow(const std::vector<std::string> &row)
  {
    if (row.size() != header_.size())
    {
      throw std::invalid_argument("CSV row width does not match header");
    }
    rows_.push_back(row);
  }

  void AddRow(const std::vector<double> &row)
  {
    std::vector<std::string> s;
    for (double v : row)
    {
      s.push_back(Format(v));
    }
    AddRow(s);
  }

  void Write(std::ostream &out) const
  {
    WriteLine(out, header_);
    for (const auto &r : rows_)
    {
      WriteLine(out, r);
    }
  }

  void Save(const std::string &path) const
  {
    std::ofstream out(path);
    if (!out)
    {
      throw std::runtime_error("cannot write " + path);
    }
    Write(out);
  }

  static std::string Format(double v)
  {
    std::ostringstream s;
    s.precision(12);
    s << v;
    return s.str();
  }

private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;

  static void WriteLine(std::ostream &out, const std::vector<std::string> &r)
  {
    for (std::size_t i = 0; i < r.size(); i++)
    {
      out << (i ? "," : "") << r[i];
    }
    out << '\n';
  }
};

inline void WriteControlCsv(std::ostream &out, const ControlTrajectory &z)
{
  out << "n,t_n,face_id,value\n";
  out.precision(12);
  for (int n = 0; n <= z.Steps(); n++)
  {
    for (int f = 0; f < z.NumFaces(); f++)
    {
      out << n << ',' << z.Time(n) << ',' << f << ',' << z.values(f, n) << '\n';
    }
  }
}

// Boundary integral of the control over each cube side, per time node.
inline Eigen::MatrixXd SideIntegrals(const Mesh &mesh, const std::vector<double> &areas,
                                     const ControlTrajectory &z)
{
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(6, z.Steps() + 1);
  for (int f = 0; f < z.NumFaces(); f++)
  {
    const int side = CubeSide(mesh.Faces()[f].tag);
    s.row(side) += areas[f] * z.values.row(f);
  }
  return s;
}

inline void WriteSideIntegralCsv(std::ostream &out, const Eigen::MatrixXd &sides, double dt)
{
  out << "t_n,side,integral\n";
  out.precision(12);
  for (int n = 0; n < sides.cols(); n++)
  {
    for (int s = 0; s < sides.rows(); s++)
    {
      out << n * dt << ',' << s << ',' << sides(s, n) << '\n';
    }
  }
}

//
// VTK legacy ASCII unstructured grid of the mesh vertices. Point fields are taken from the
// vertex dofs of P_k vectors; optional boundary triangles carry per-face cell data.
//
struct VtkPointField
{
  std::string name;
  int components = 1;
  std::vector<double> values;  // vertices x components
};

inline VtkPointField VertexVectorField(const ScalarSpace &s, const std::string &name,
                                       const Eigen::VectorXd &full)
{
  VtkPointField f{name, 3, {}};
  for (int v = 0; v < s.GetMesh().NumVertices(); v++)
  {
    const int d = s.VertexDof(v);
    for (int c = 0; c < 3; c++)
    {
      f.values.push_back(full[3 * d + c]);
    }
  }
  return f;
}

inline VtkPointField VertexScalarField(const ScalarSpace &s, const std::string &name,
                                       const Eigen::VectorXd &vals)
{
  VtkPointField f{name, 1, {}};
  for (int v = 0; v < s.GetMesh().NumVertices(); v++)
  {
    f.values.push_back(vals[s.VertexDof(v)]);
  }
  return f;
}

inline void WriteVtk(std::ostream &out, const Mesh &mesh, const std::vector<VtkPointField> &fields,
                     const std::string &face_field_name = "",
                     const Eigen::VectorXd &face_values = Eigen::VectorXd())
{
  const bool with_faces = face_values.size() > 0;
  const int nt = mesh.NumTets(), nf = with_faces ? mesh.NumFaces() : 0;
  out << "# vtk DataFile Version 3.0\npiezoctrl\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out.precision(12);
  out << "POINTS " << mesh.NumVertices() << " double\n";
  for (const auto &x : mesh.Vertices())
  {
    out << x[0] << ' ' << x[1] << ' ' << x[2] << '\n';
  }
  out << "CELLS " << nt + nf << ' ' << 5 * nt + 4 * nf << '\n';
  for (const auto &t : mesh.Tets())
  {
    out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  }
  for (int f = 0; f < nf; f++)
  {
    const auto &v = mesh.Faces()[f].vertices;
    out << "3 " << v[0] << ' ' << v[1] << ' ' << v[2] << '\n';
  }
  out << "CELL_TYPES " << nt + nf << '\n';
  for (int t = 0; t < nt; t++)
  {
    out << "10\n";
  }
  for (int f = 0; f < nf; f++)
  {
    out << "5\n";
  }
  if (with_faces)
  {
    out << "CELL_DATA " << nt + nf << '\n';
    out << "SCALARS " << face_field_name << " double 1\nLOOKUP_TABLE default\n";
    for (int t = 0; t < nt; t++)
    {
      out << "0\n";
    }
    for (int f = 0; f < nf; f++)
    {
      out << face_values[f] << '\n';
    }
    out << "SCALARS is_boundary int 1\nLOOKUP_TABLE default\n";
    for (int t = 0; t < nt + nf; t++)
    {
      out << (t >= nt ? 1 : 0) << '\n';
    }
  }
  if (!fields.empty())
  {
    out << "POINT_DATA " << mesh.NumVertices() << '\n';
    for (const auto &f : fields)
    {
      if (f.components == 3)
      {
        out << "VECTORS " << f.name << " double\n";
      }
      else
      {
        out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      }
      for (std::size_t i = 0; i < f.values.size(); i += f.components)
      {
        for (int c = 0; c < f.components; c++)
        {
          out << (c ? " " : "") << f.values[i + c];
        }
        out << '\n';
      }
    }
  }
}

//
// Bare-bones SVG line chart (optionally log-log).
//
struct SvgSeries
{
  std::string label;
  std::vector<double> x, y;
};

inline void WriteSvgChart(std::ostream &out, const std::string &title, const std::string &xlabel,
                          const std::string &ylabel, const std::vector<SvgSeries> &series,
                          bool loglog = false)
{
  const double w = 640, h = 420, ml = 70, mr = 150, mt = 40, mb = 50;
  auto tx = [&](double v) { return loglog ? std::log10(v) : v; };
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto &s : series)
  {
    for (std::size_t i = 0; i < s.x.size(); i++)
    {
      if (loglog && (s.x[i] <= 0 || s.y[i] <= 0))
      {
        continue;
      }
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, tx(s.y[i]));
      y1 = std::max(y1, tx(s.y[i]));
    }
  }
  if (!(x1 > x0))
  {
    x0 -= 1;
    x1 += 1;
  }
  if (!(y1 > y0))
  {
    y0 -= 1;
    y1 += 1;
  }
  auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double v) { return h - mb - (tx(v) - y0) / (y1 - y0) * (h - mt - mb); };
  static const char *colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
      << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << (loglog ? " (log10)" : "")
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << (mt + h - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (mt + h - mb) / 2 << ")\">" << ylabel << (loglog ? " (log10)" : "") << "</text>\n";
  for (int k = 0; k <= 4; k++)
  {
    const double vx = x0 + k * (x1 - x0) / 4, vy = y0 + k * (y1 - y0) / 4;
    const double sx = ml + k * (w - ml - mr) / 4, sy = h - mb - k * (h - mt - mb) / 4;
    out << "<text x=\"" << sx << "\" y=\"" << h - mb + 15
        << "\" text-anchor=\"middle\" font-size=\"10\">" << CsvTable::Format(vx) << "</text>\n";
    out << "<text x=\"" << ml - 5 << "\" y=\"" << sy + 3
        << "\" text-anchor=\"end\" font-size=\"10\">" << CsvTable::Format(vy) << "</text>\n";
  }
  for (std::size_t k = 0; k < series.size(); k++)
  {
    const auto &s = series[k];
    const char *col = colors[k % 8];
    out << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); i++)
    {
      if (loglog && (s.x[i] <= 0 || s.y[i] <= 0))
      {
        continue;
      }
      out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << w - mr + 10 << "\" y=\"" << mt + 16 * k + 10
        << "\" font-size=\"11\" fill=\"" << col << "\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace piezoctrl

#endif  // PIEZOCTRL_IO_HPP
