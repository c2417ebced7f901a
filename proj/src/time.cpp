#include "revhist/time.hpp"

#include <cstdio>

#include "revhist/error.hpp"

namespace revhist {

using namespace std::chrono;

std::string_view to_string(Granularity g)
{
  return g == Granularity::day ? "day" : "week";
}

std::optional<Granularity> parse_granularity(std::string_view text)
{
  if (text == "day")
    return Granularity::day;
  if (text == "week")
    return Granularity::week;
  return std::nullopt;
}

namespace {

bool read_digits(std::string_view text, std::size_t pos, std::size_t n,
                 int& out)
{
  if (pos + n > text.size())
    return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    char c = text[i];
    if (c < '0' || c > '9')
      return false;
    v = v * 10 + (c - '0');
  }
  out = v;
  return true;
}

std::optional<Date> parse_ymd(std::string_view text)
{
  int y = 0, m = 0, d = 0;
  if (text.size() < 10 || text[4] != '-' || text[7] != '-')
    return std::nullopt;
  if (!read_digits(text, 0, 4, y) || !read_digits(text, 5, 2, m) ||
      !read_digits(text, 8, 2, d))
    return std::nullopt;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(m)},
                     day{static_cast<unsigned>(d)}};
  if (!ymd.ok())
    return std::nullopt;
  return sys_days{ymd};
}

} // namespace

std::optional<Timestamp> try_parse_iso8601(std::string_view text)
{
  if (text.size() != 20 || text[10] != 'T' || text[13] != ':' ||
      text[16] != ':' || text[19] != 'Z')
    return std::nullopt;
  auto date = parse_ymd(text.substr(0, 10));
  int hh = 0, mm = 0, ss = 0;
  if (!date || !read_digits(text, 11, 2, hh) || !read_digits(text, 14, 2, mm) ||
      !read_digits(text, 17, 2, ss))
    return std::nullopt;
  if (hh > 23 || mm > 59 || ss > 59)
    return std::nullopt;
  return Timestamp{*date} + hours{hh} + minutes{mm} + seconds{ss};
}

Timestamp parse_iso8601(std::string_view text)
{
  if (auto t = try_parse_iso8601(text))
    return *t;
  throw Error(ErrorCode::bad_timestamp,
              "not an ISO-8601 UTC instant: '" + std::string(text) + "'");
}

std::string format_iso8601(Timestamp t)
{
  auto d = floor<days>(t);
  year_month_day ymd{d};
  hh_mm_ss hms{t - d};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ldZ",
                static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()),
                static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

Timestamp parse_date_or_instant(std::string_view text)
{
  if (text.size() == 10) {
    if (auto d = parse_ymd(text))
      return Timestamp{*d};
  } else if (auto t = try_parse_iso8601(text)) {
    return *t;
  }
  throw Error(ErrorCode::bad_timestamp,
              "expected YYYY-MM-DD or an ISO-8601 instant, got '" +
                std::string(text) + "'");
}

std::string format_date(Date d)
{
  year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u",
                static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

Date day_of(Timestamp t)
{
  return floor<days>(t);
}

Date iso_week_start(Date d)
{
  return d - (weekday{d} - Monday);
}

Date bucket_start(Timestamp t, Granularity g)
{
  auto d = day_of(t);
  return g == Granularity::day ? d : iso_week_start(d);
}

Date next_bucket(Date d, Granularity g)
{
  return d + days{g == Granularity::day ? 1 : 7};
}

} // namespace revhist
