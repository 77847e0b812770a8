/*
Copyright 2026 The kadrtc Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <chrono>
#include <compare>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>

namespace kadrtc {

// Milliseconds since the owning transport's epoch (virtual time in the
// simulator, steady clock for UDP).
using timestamp = std::chrono::milliseconds;
using std::chrono::milliseconds;
using std::chrono::seconds;

// A routable transport address in "host:port" form.
class endpoint
{
public:
	endpoint() = default;
	explicit endpoint(std::string address) : m_address(std::move(address)) {}

	std::string const& str() const { return m_address; }
	bool empty() const { return m_address.empty(); }

	// splits "host:port"; nullopt when the port is missing or not numeric
	std::optional<std::pair<std::string, unsigned short>> split() const;

	friend auto operator<=>(endpoint const&, endpoint const&) = default;
	friend std::ostream& operator<<(std::ostream& os, endpoint const& e) { return os << e.m_address; }

private:
	std::string m_address;
};

struct endpoint_hash
{
	std::size_t operator()(endpoint const& e) const noexcept { return std::hash<std::string>{}(e.str()); }
};

inline std::optional<std::pair<std::string, unsigned short>> endpoint::split() const
{
	auto const colon = m_address.rfind(':');
	if (colon == std::string::npos || colon == 0 || colon + 1 == m_address.size()) return std::nullopt;
	unsigned long port = 0;
	for (std::size_t i = colon + 1; i < m_address.size(); ++i)
	{
		char const c = m_address[i];
		if (c < '0' || c > '9') return std::nullopt;
		port = port * 10 + unsigned(c - '0');
		if (port > 65535) return std::nullopt;
	}
	std::string host = m_address.substr(0, colon);
	if (host.size() > 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
	return std::make_pair(std::move(host), static_cast<unsigned short>(port));
}

} // namespace kadrtc
