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

#include "kadrtc/protocol.hpp"

#include "json.hpp"

#include <array>

namespace kadrtc {

using json = nlohmann::json;

namespace {

	struct kind_name { rpc_kind kind; char const* name; };

	constexpr std::array<kind_name, 11> kind_names{{
		{rpc_kind::ping, "PING"},
		{rpc_kind::pong, "PONG"},
		{rpc_kind::store, "STORE"},
		{rpc_kind::store_ok, "STORE_OK"},
		{rpc_kind::find_node, "FIND_NODE"},
		{rpc_kind::find_value, "FIND_VALUE"},
		{rpc_kind::nodes, "NODES"},
		{rpc_kind::value, "VALUE"},
		{rpc_kind::signal_relay, "SIGNAL_RELAY"},
		{rpc_kind::relay_ok, "RELAY_OK"},
		{rpc_kind::relay_fail, "RELAY_FAIL"},
	}};

	std::string to_hex(std::string_view bytes)
	{
		static char const digits[] = "0123456789abcdef";
		std::string out;
		out.reserve(bytes.size() * 2);
		for (unsigned char c : bytes)
		{
			out.push_back(digits[c >> 4]);
			out.push_back(digits[c & 0xf]);
		}
		return out;
	}

	std::optional<std::string> from_hex(std::string_view hex)
	{
		if (hex.size() % 2) return std::nullopt;
		auto nibble = [](char c) -> int {
			if (c >= '0' && c <= '9') return c - '0';
			if (c >= 'a' && c <= 'f') return c - 'a' + 10;
			return -1;
		};
		std::string out(hex.size() / 2, '\0');
		for (std::size_t i = 0; i < out.size(); ++i)
		{
			int const hi = nibble(hex[2 * i]);
			int const lo = nibble(hex[2 * i + 1]);
			if (hi < 0 || lo < 0) return std::nullopt;
			out[i] = char(hi << 4 | lo);
		}
		return out;
	}

	// thrown internally while decoding, mapped to decode_error
	struct reject { decode_error error; };

	[[noreturn]] void fail(decode_error e = decode_error::malformed) { throw reject{e}; }

	json const& field(json const& obj, char const* name)
	{
		auto const i = obj.find(name);
		if (i == obj.end()) fail();
		return *i;
	}

	void expect_keys(json const& obj, std::size_t n)
	{
		if (!obj.is_object() || obj.size() != n) fail();
	}

	std::string const& string_field(json const& obj, char const* name)
	{
		json const& v = field(obj, name);
		if (!v.is_string()) fail();
		return v.get_ref<std::string const&>();
	}

	node_id id_field(json const& obj, char const* name)
	{
		auto id = node_id::from_hex(string_field(obj, name));
		if (!id) fail();
		return *id;
	}

	std::uint32_t u32_field(json const& obj, char const* name)
	{
		json const& v = field(obj, name);
		if (!v.is_number_unsigned()) fail();
		auto const n = v.get<std::uint64_t>();
		if (n > 0xffffffffu) fail();
		return std::uint32_t(n);
	}

	endpoint address_field(json const& obj, char const* name)
	{
		endpoint e(string_field(obj, name));
		if (!e.split()) fail();
		return e;
	}

	json encode_body(rpc_kind kind, rpc_body const& body)
	{
		if (body.index() != default_body(kind).index())
			throw encode_error(std::string("body does not match kind ") + to_string(kind));

		json out = json::object();
		switch (kind)
		{
		case rpc_kind::store:
		{
			auto const& b = std::get<store_body>(body);
			if (b.value.empty()) throw encode_error("STORE value must be non-empty");
			if (b.value.size() > max_value_size) throw encode_error("STORE value exceeds 8 KiB");
			if (b.ttl_s == 0) throw encode_error("STORE ttl must be positive");
			out["key"] = b.key.to_hex();
			out["ttl"] = b.ttl_s;
			out["value"] = to_hex(b.value);
			break;
		}
		case rpc_kind::find_node:
		case rpc_kind::find_value:
			out["target"] = std::get<find_body>(body).target.to_hex();
			break;
		case rpc_kind::nodes:
		{
			json list = json::array();
			for (auto const& c : std::get<nodes_body>(body).contacts)
				list.push_back(json{{"addr", c.address.str()}, {"id", c.id.to_hex()}});
			out["contacts"] = std::move(list);
			break;
		}
		case rpc_kind::value:
		{
			auto const& b = std::get<value_body>(body);
			if (b.values.empty()) throw encode_error("VALUE must carry at least one value");
			json list = json::array();
			for (auto const& v : b.values)
			{
				if (v.value.empty() || v.value.size() > max_value_size || v.ttl_s == 0)
					throw encode_error("VALUE entry out of bounds");
				list.push_back(json{{"publisher", v.publisher.to_hex()}, {"ttl", v.ttl_s}
					, {"value", to_hex(v.value)}});
			}
			out["values"] = std::move(list);
			break;
		}
		case rpc_kind::signal_relay:
		{
			auto const& b = std::get<signal_relay_body>(body);
			if (b.envelope.size() > max_envelope_size) throw encode_error("envelope exceeds 64 KiB");
			out["dest_peer_key"] = b.dest_peer_key.to_hex();
			out["envelope"] = b.envelope;
			break;
		}
		case rpc_kind::relay_fail:
			out["reason"] = "NO_SUCH_PEER";
			break;
		default:
			break;
		}
		return out;
	}

	rpc_body decode_body(rpc_kind kind, json const& obj)
	{
		switch (kind)
		{
		case rpc_kind::store:
		{
			expect_keys(obj, 3);
			store_body b;
			b.key = id_field(obj, "key");
			b.ttl_s = u32_field(obj, "ttl");
			std::string const& hex = string_field(obj, "value");
			if (hex.size() > 2 * max_value_size) fail(decode_error::oversize);
			auto value = from_hex(hex);
			if (!value || value->empty() || b.ttl_s == 0) fail();
			b.value = std::move(*value);
			return b;
		}
		case rpc_kind::find_node:
		case rpc_kind::find_value:
			expect_keys(obj, 1);
			return find_body{id_field(obj, "target")};
		case rpc_kind::nodes:
		{
			expect_keys(obj, 1);
			json const& list = field(obj, "contacts");
			if (!list.is_array()) fail();
			nodes_body b;
			b.contacts.reserve(list.size());
			for (json const& c : list)
			{
				expect_keys(c, 2);
				b.contacts.push_back({id_field(c, "id"), address_field(c, "addr")});
			}
			return b;
		}
		case rpc_kind::value:
		{
			expect_keys(obj, 1);
			json const& list = field(obj, "values");
			if (!list.is_array() || list.empty()) fail();
			value_body b;
			for (json const& v : list)
			{
				expect_keys(v, 3);
				value_entry e;
				e.publisher = id_field(v, "publisher");
				e.ttl_s = u32_field(v, "ttl");
				std::string const& hex = string_field(v, "value");
				if (hex.size() > 2 * max_value_size) fail(decode_error::oversize);
				auto value = from_hex(hex);
				if (!value || value->empty() || e.ttl_s == 0) fail();
				e.value = std::move(*value);
				b.values.push_back(std::move(e));
			}
			return b;
		}
		case rpc_kind::signal_relay:
		{
			expect_keys(obj, 2);
			signal_relay_body b;
			b.dest_peer_key = id_field(obj, "dest_peer_key");
			b.envelope = string_field(obj, "envelope");
			if (b.envelope.size() > max_envelope_size) fail(decode_error::oversize);
			return b;
		}
		case rpc_kind::relay_fail:
			expect_keys(obj, 1);
			if (string_field(obj, "reason") != "NO_SUCH_PEER") fail();
			return relay_fail_body{};
		default:
			expect_keys(obj, 0);
			return empty_body{};
		}
	}

} // anonymous namespace

char const* to_string(rpc_kind k)
{
	for (auto const& n : kind_names)
		if (n.kind == k) return n.name;
	return "?";
}

std::optional<rpc_kind> rpc_kind_from_string(std::string_view s)
{
	for (auto const& n : kind_names)
		if (s == n.name) return n.kind;
	return std::nullopt;
}

bool is_request(rpc_kind k)
{
	switch (k)
	{
	case rpc_kind::ping:
	case rpc_kind::store:
	case rpc_kind::find_node:
	case rpc_kind::find_value:
	case rpc_kind::signal_relay:
		return true;
	default:
		return false;
	}
}

bool answers(rpc_kind request, rpc_kind response)
{
	switch (request)
	{
	case rpc_kind::ping: return response == rpc_kind::pong;
	case rpc_kind::store: return response == rpc_kind::store_ok;
	case rpc_kind::find_node: return response == rpc_kind::nodes;
	case rpc_kind::find_value: return response == rpc_kind::nodes || response == rpc_kind::value;
	case rpc_kind::signal_relay: return response == rpc_kind::relay_ok || response == rpc_kind::relay_fail;
	default: return false;
	}
}

rpc_body default_body(rpc_kind k)
{
	switch (k)
	{
	case rpc_kind::store: return store_body{};
	case rpc_kind::find_node:
	case rpc_kind::find_value: return find_body{};
	case rpc_kind::nodes: return nodes_body{};
	case rpc_kind::value: return value_body{};
	case rpc_kind::signal_relay: return signal_relay_body{};
	case rpc_kind::relay_fail: return relay_fail_body{};
	default: return empty_body{};
	}
}

std::string encode(rpc_message const& msg)
{
	json out = json::object();
	out["body"] = encode_body(msg.kind, msg.body);
	out["kind"] = to_string(msg.kind);
	out["rpc_id"] = msg.rpc_id.to_hex();
	out["sender_addr"] = msg.sender.address.str();
	out["sender_id"] = msg.sender.id.to_hex();
	std::string raw;
	try
	{
		raw = out.dump();
	}
	catch (json::type_error const&)
	{
		throw encode_error("message text is not valid UTF-8");
	}
	if (raw.size() > max_datagram_size) throw encode_error("message exceeds maximum datagram size");
	return raw;
}

char const* to_string(decode_error e)
{
	switch (e)
	{
	case decode_error::malformed: return "malformed";
	case decode_error::unknown_kind: return "unknown_kind";
	case decode_error::oversize: return "oversize";
	}
	return "?";
}

decode_result decode(std::string_view raw)
{
	decode_result r;
	if (raw.size() > max_datagram_size)
	{
		r.error = decode_error::oversize;
		return r;
	}
	json const doc = json::parse(raw.begin(), raw.end(), nullptr, false);
	if (doc.is_discarded())
	{
		r.error = decode_error::malformed;
		return r;
	}
	try
	{
		expect_keys(doc, 5);
		rpc_message m;
		auto const kind = rpc_kind_from_string(string_field(doc, "kind"));
		if (!kind) fail(decode_error::unknown_kind);
		m.kind = *kind;
		m.rpc_id = id_field(doc, "rpc_id");
		m.sender.id = id_field(doc, "sender_id");
		m.sender.address = address_field(doc, "sender_addr");
		m.body = decode_body(m.kind, field(doc, "body"));
		// only the canonical spelling of a message is accepted
		if (encode(m) != raw) fail(decode_error::malformed);
		r.message = std::move(m);
	}
	catch (reject const& e)
	{
		r.error = e.error;
	}
	catch (json::exception const&)
	{
		r.error = decode_error::malformed;
	}
	catch (encode_error const&)
	{
		r.error = decode_error::malformed;
	}
	return r;
}

std::pair<std::string, std::string> describe_datagram(std::string_view raw)
{
	auto const r = decode(raw);
	if (!r) return {"?", ""};
	return {to_string(r.message->kind), r.message->rpc_id.to_hex()};
}

bool pending_table::insert(node_id const& rpc_id, entry e)
{
	return m_entries.emplace(rpc_id, e).second;
}

std::optional<pending_table::entry> pending_table::match_response(rpc_message const& resp)
{
	auto const i = m_entries.find(resp.rpc_id);
	if (i == m_entries.end()) return std::nullopt;
	if (!answers(i->second.request_kind, resp.kind)) return std::nullopt;
	if (!i->second.peer.is_zero() && i->second.peer != resp.sender.id) return std::nullopt;
	entry e = i->second;
	m_entries.erase(i);
	return e;
}

std::optional<pending_table::entry> pending_table::expire(node_id const& rpc_id)
{
	auto const i = m_entries.find(rpc_id);
	if (i == m_entries.end()) return std::nullopt;
	entry e = i->second;
	m_entries.erase(i);
	return e;
}

} // namespace kadrtc
