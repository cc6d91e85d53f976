#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mits/core.hpp"

namespace mits {

// The three observation-block text formats:
//   full_triplet          <time> t hours </time> <channel> c </channel> <value> v </value>
//   redacted_pair         <time> t hours </time> <channel> c </channel>
//   mixed_by_pending_flag pending observations as pairs, the rest as triplets
enum class RenderMode { full_triplet, redacted_pair, mixed_by_pending_flag };

inline std::string to_string(RenderMode m) {
  switch (m) {
    case RenderMode::full_triplet: return "full_triplet";
    case RenderMode::redacted_pair: return "redacted_pair";
    case RenderMode::mixed_by_pending_flag: return "mixed_by_pending_flag";
  }
  throw Error("bad render mode");
}

inline RenderMode render_mode_from_string(const std::string& s) {
  if (s == "full_triplet" || s == "full") return RenderMode::full_triplet;
  if (s == "redacted_pair" || s == "redacted") return RenderMode::redacted_pair;
  if (s == "mixed_by_pending_flag" || s == "mixed") return RenderMode::mixed_by_pending_flag;
  throw Error("unknown render mode: " + s);
}

struct SerializedMits {
  std::string text;  // observation lines joined by '\n', no trailing newline
  RenderMode mode = RenderMode::full_triplet;
  size_t line_count = 0;  // number of observations (text values may span physical lines)
};

struct RenderError : Error {
  explicit RenderError(const std::string& msg) : Error(msg) {}
};

struct ParseError : Error {
  size_t line;
  ParseError(size_t line_, const std::string& msg)
      : Error("line " + std::to_string(line_) + ": " + msg), line(line_) {}
};

// The format is XML-styled text, not well-formed XML: values render verbatim
// (no entity escaping) and the single unrepresentable substring "</value>"
// is a hard error.
inline SerializedMits render(const std::vector<FlatObservation>& flat, RenderMode mode) {
  std::string out;
  for (size_t i = 0; i < flat.size(); ++i) {
    const FlatObservation& o = flat[i];
    bool as_pair = mode == RenderMode::redacted_pair ||
                   (mode == RenderMode::mixed_by_pending_flag && o.pending);
    if (i) out += '\n';
    out += "<time> ";
    out += format_hours(o.charttime);
    out += " hours </time> <channel> ";
    out += o.channel;
    out += " </channel>";
    if (!as_pair) {
      if (!o.value)
        throw RenderError("observation " + std::to_string(i) + " (" + o.channel +
                          ") has no value but triplet rendering was requested");
      if (o.value->find("</value>") != std::string::npos)
        throw RenderError("value on channel '" + o.channel +
                          "' contains the literal '</value>', which cannot be represented");
      out += " <value> ";
      out += *o.value;
      out += " </value>";
    }
  }
  return SerializedMits{std::move(out), mode, flat.size()};
}

namespace detail {

inline void expect_literal(const std::string& text, size_t& pos, std::string_view lit, size_t line,
                           const std::string& what) {
  if (text.compare(pos, lit.size(), lit) != 0) throw ParseError(line, "expected " + what);
  pos += lit.size();
}

}  // namespace detail

// Inverse of render. Pair lines come back value-less with pending=true, so
// parse(render(x)) reproduces x (after formatting normalization) for each
// mode's natural input view. Everything between '<value>' and the next
// '</value>' is content; note text may span physical lines.
inline std::vector<FlatObservation> parse(const std::string& text, const ChannelRegistry& registry) {
  std::vector<FlatObservation> out;
  size_t pos = 0, line = 1;
  while (pos < text.size()) {
    const size_t obs_line = line;
    detail::expect_literal(text, pos, "<time> ", obs_line, "'<time> ' at start of observation");
    size_t t_end = text.find(" </time>", pos);
    std::string time_content = t_end == std::string::npos ? "" : text.substr(pos, t_end - pos);
    if (t_end == std::string::npos || time_content.find('\n') != std::string::npos)
      throw ParseError(obs_line, "missing ' </time>'");
    if (!time_content.ends_with(" hours"))
      throw ParseError(obs_line, "time content must end with ' hours'");
    std::string num = time_content.substr(0, time_content.size() - 6);
    double t = 0;
    size_t consumed = 0;
    try {
      t = std::stod(num, &consumed);
    } catch (const std::exception&) {
      throw ParseError(obs_line, "non-numeric time '" + num + "'");
    }
    if (consumed != num.size() || !std::isfinite(t))
      throw ParseError(obs_line, "non-numeric time '" + num + "'");
    pos = t_end + 8;  // " </time>"

    detail::expect_literal(text, pos, " <channel> ", obs_line, "' <channel> '");
    size_t c_end = text.find(" </channel>", pos);
    std::string name = c_end == std::string::npos ? "" : text.substr(pos, c_end - pos);
    if (c_end == std::string::npos || name.find('\n') != std::string::npos)
      throw ParseError(obs_line, "missing ' </channel>'");
    if (!registry.find_by_display(name)) throw ParseError(obs_line, "unknown channel '" + name + "'");
    pos = c_end + 11;  // " </channel>"

    FlatObservation o;
    o.charttime = t;
    o.channel = name;
    if (pos >= text.size() || text[pos] == '\n') {
      o.pending = true;  // pair line: value withheld
    } else {
      detail::expect_literal(text, pos, " <value> ", obs_line, "' <value> ' or end of line");
      size_t v_end = text.find(" </value>", pos);
      if (v_end == std::string::npos) throw ParseError(obs_line, "missing ' </value>'");
      std::string value = text.substr(pos, v_end - pos);
      line += static_cast<size_t>(std::count(value.begin(), value.end(), '\n'));
      o.value = std::move(value);
      o.pending = false;
      pos = v_end + 9;  // " </value>"
      if (pos < text.size() && text[pos] != '\n')
        throw ParseError(line, "unexpected content after '</value>'");
    }
    out.push_back(std::move(o));
    if (pos < text.size() && text[pos] == '\n') {
      ++pos;
      ++line;
    }
  }
  return out;
}

}  // namespace mits
