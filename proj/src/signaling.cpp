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

#include "kadrtc/signaling.hpp"

#include "json.hpp"

#include <algorithm>
#include <initializer_list>
#include <set>

namespace kadrtc {

using json = nlohmann::json;

peer_identity peer_identity::from_name(std::string name)
{
	node_id const key = node_id::from_sha1(name);
	return {std::move(name), key};
}

std::string presence_record::encode() const
{
	json j = json::object();
	j["gateway_addr"] = gateway.address.str();
	j["gateway_id"] = gateway.id.to_hex();
	j["peer"] = peer_name;
	j["seq"] = seq;
	return j.dump();
}

std::optional<presence_record> presence_record::decode(std::string_view value, timestamp expires_at)
{
	json const j = json::parse(value.begin(), value.end(), nullptr, false);
	if (!j.is_object() || j.size() != 4) return std::nullopt;
	auto const addr = j.find("gateway_addr");
	auto const gid = j.find("gateway_id");
	auto const peer = j.find("peer");
	auto const seq = j.find("seq");
	if (addr == j.end() || gid == j.end() || peer == j.end() || seq == j.end()) return std::nullopt;
	if (!addr->is_string() || !gid->is_string() || !peer->is_string() || !seq->is_number_unsigned())
		return std::nullopt;
	auto const id = node_id::from_hex(gid->get<std::string>());
	endpoint const ep(addr->get<std::string>());
	if (!id || !ep.split()) return std::nullopt;
	presence_record r;
	r.peer_name = peer->get<std::string>();
	r.peer_key = node_id::from_sha1(r.peer_name);
	r.gateway = {*id, ep};
	r.seq = seq->get<std::uint64_t>();
	r.expires_at = expires_at;
	return r;
}

std::optional<presence_record> newest_presence(std::vector<presence_record> const& records, timestamp now)
{
	std::optional<presence_record> best;
	for (auto const& r : records)
	{
		if (r.expires_at <= now) continue;
		if (!best || std::tie(r.seq, r.gateway.id) > std::tie(best->seq, best->gateway.id)) best = r;
	}
	return best;
}

char const* to_string(signal_kind k)
{
	switch (k)
	{
	case signal_kind::offer: return "offer";
	case signal_kind::answer: return "answer";
	case signal_kind::candidate: return "candidate";
	case signal_kind::bye: return "bye";
	}
	return "?";
}

std::optional<signal_kind> signal_kind_from_string(std::string_view s)
{
	if (s == "offer") return signal_kind::offer;
	if (s == "answer") return signal_kind::answer;
	if (s == "candidate") return signal_kind::candidate;
	if (s == "bye") return signal_kind::bye;
	return std::nullopt;
}

namespace {

	bool is_session_id(std::string_view s)
	{
		if (s.size() != 32) return false;
		return std::all_of(s.begin(), s.end(), [](char c) {
			return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
		});
	}

	enum class field_type { string, integer };
	struct field_spec { char const* name; field_type type; };

	struct op_spec
	{
		char const* op;
		std::vector<field_spec> fields;
	};

	std::vector<op_spec> const& client_ops()
	{
		static std::vector<op_spec> const ops{
			{"register", {{"name", field_type::string}}},
			{"connect", {{"to", field_type::string}}},
			{"signal", {{"session", field_type::string}, {"kind", field_type::string}
				, {"seq", field_type::integer}, {"blob", field_type::string}}},
			{"leave", {}},
		};
		return ops;
	}

	std::vector<op_spec> const& server_ops()
	{
		static std::vector<op_spec> const ops{
			{"registered", {{"replicas", field_type::integer}}},
			{"session", {{"session", field_type::string}, {"from", field_type::string}}},
			{"signal", {{"session", field_type::string}, {"kind", field_type::string}
				, {"seq", field_type::integer}, {"blob", field_type::string}}},
			{"error", {{"code", field_type::string}, {"detail", field_type::string}}},
		};
		return ops;
	}

	std::optional<std::string>* string_slot(gateway_frame& f, std::string_view name)
	{
		if (name == "name") return &f.name;
		if (name == "to") return &f.to;
		if (name == "session") return &f.session;
		if (name == "kind") return &f.kind;
		if (name == "blob") return &f.blob;
		if (name == "from") return &f.from;
		if (name == "code") return &f.code;
		if (name == "detail") return &f.detail;
		return nullptr;
	}

	std::optional<std::int64_t>* int_slot(gateway_frame& f, std::string_view name)
	{
		if (name == "seq") return &f.seq;
		if (name == "replicas") return &f.replicas;
		return nullptr;
	}

	std::optional<gateway_frame> parse_frame(std::string_view text, std::vector<op_spec> const& ops)
	{
		json const j = json::parse(text.begin(), text.end(), nullptr, false);
		if (!j.is_object()) return std::nullopt;
		auto const op = j.find("op");
		if (op == j.end() || !op->is_string()) return std::nullopt;

		auto const spec = std::find_if(ops.begin(), ops.end()
			, [&](op_spec const& s) { return *op == s.op; });
		if (spec == ops.end()) return std::nullopt;
		if (j.size() != spec->fields.size() + 1) return std::nullopt;

		gateway_frame f;
		f.op = spec->op;
		for (auto const& field : spec->fields)
		{
			auto const v = j.find(field.name);
			if (v == j.end()) return std::nullopt;
			if (field.type == field_type::string)
			{
				if (!v->is_string()) return std::nullopt;
				*string_slot(f, field.name) = v->get<std::string>();
			}
			else
			{
				if (!v->is_number_integer()) return std::nullopt;
				auto const n = v->get<std::int64_t>();
				if (n < 0) return std::nullopt;
				*int_slot(f, field.name) = n;
			}
		}
		if (f.kind && !signal_kind_from_string(*f.kind)) return std::nullopt;
		if (f.op == "signal" && !is_session_id(*f.session)) return std::nullopt;
		return f;
	}

} // anonymous namespace

std::string signal_envelope::encode() const
{
	json j = json::object();
	j["blob"] = blob;
	j["from"] = from_peer;
	j["kind"] = to_string(kind);
	j["seq"] = seq;
	j["session"] = session_id;
	j["to"] = to_peer;
	return j.dump();
}

std::optional<signal_envelope> signal_envelope::decode(std::string_view raw)
{
	json const j = json::parse(raw.begin(), raw.end(), nullptr, false);
	if (!j.is_object() || j.size() != 6) return std::nullopt;
	signal_envelope e;
	for (char const* name : {"blob", "from", "kind", "session", "to"})
	{
		auto const v = j.find(name);
		if (v == j.end() || !v->is_string()) return std::nullopt;
	}
	auto const seq = j.find("seq");
	if (seq == j.end() || !seq->is_number_unsigned()) return std::nullopt;
	auto const kind = signal_kind_from_string(j["kind"].get<std::string>());
	if (!kind) return std::nullopt;
	e.blob = j["blob"].get<std::string>();
	e.from_peer = j["from"].get<std::string>();
	e.to_peer = j["to"].get<std::string>();
	e.session_id = j["session"].get<std::string>();
	e.seq = seq->get<std::uint64_t>();
	e.kind = *kind;
	if (!is_session_id(e.session_id)) return std::nullopt;
	return e;
}

std::optional<gateway_frame> parse_client_frame(std::string_view text) { return parse_frame(text, client_ops()); }
std::optional<gateway_frame> parse_server_frame(std::string_view text) { return parse_frame(text, server_ops()); }

std::string format_frame(gateway_frame const& f)
{
	json j = json::object();
	j["op"] = f.op;
	auto put = [&](char const* name, auto const& v) { if (v) j[name] = *v; };
	put("name", f.name);
	put("to", f.to);
	put("session", f.session);
	put("kind", f.kind);
	put("seq", f.seq);
	put("blob", f.blob);
	put("replicas", f.replicas);
	put("from", f.from);
	put("code", f.code);
	put("detail", f.detail);
	return j.dump();
}

gateway_frame registered_frame(std::int64_t replicas)
{
	gateway_frame f;
	f.op = "registered";
	f.replicas = replicas;
	return f;
}

gateway_frame session_frame(std::string const& session, std::string const& from)
{
	gateway_frame f;
	f.op = "session";
	f.session = session;
	f.from = from;
	return f;
}

gateway_frame signal_frame(std::string const& session, signal_kind kind, std::int64_t seq, std::string const& blob)
{
	gateway_frame f;
	f.op = "signal";
	f.session = session;
	f.kind = to_string(kind);
	f.seq = seq;
	f.blob = blob;
	return f;
}

gateway_frame error_frame(std::string const& code, std::string const& detail)
{
	gateway_frame f;
	f.op = "error";
	f.code = code;
	f.detail = detail;
	return f;
}

gateway::gateway(node& dht, gateway_config cfg)
	: m_node(dht)
	, m_config(cfg)
	, m_alive(std::make_shared<bool>(true))
{
	m_node.set_signal_handler([this](peer_info const& from, signal_relay_body const& body) {
		return relay_signal(from, body);
	});
}

gateway::~gateway()
{
	m_node.set_signal_handler({});
	for (auto& [id, c] : m_clients) drop_client_state(c);
}

gateway::client* gateway::find_client(client_id id)
{
	auto const i = m_clients.find(id);
	return i == m_clients.end() ? nullptr : &i->second;
}

gateway::client_id gateway::attach(std::shared_ptr<client_link> link)
{
	client_id const id = m_next_client++;
	m_clients[id].link = std::move(link);
	return id;
}

void gateway::send(client_id id, gateway_frame const& f)
{
	if (auto* c = find_client(id)) c->link->send_frame(format_frame(f));
}

void gateway::on_frame(client_id id, std::string_view text)
{
	client* c = find_client(id);
	if (!c) return;
	auto const f = parse_client_frame(text);
	if (!f)
	{
		send(id, error_frame("BAD_REQUEST", "frame does not match the gateway protocol"));
		return;
	}
	if (f->op == "register")
	{
		register_peer(id, *f->name, [this, id, alive = std::weak_ptr<bool>(m_alive)](register_result r) {
			if (alive.expired()) return;
			if (r.ok) send(id, registered_frame(r.replicas));
			else if (r.error.rfind("bad request", 0) == 0) send(id, error_frame("BAD_REQUEST", r.error));
			else send(id, error_frame("REGISTER_FAILED", r.error));
		});
	}
	else if (f->op == "connect") connect(id, *f->to);
	else if (f->op == "signal") on_signal(id, *f);
	else if (f->op == "leave") leave(id);
}

void gateway::register_peer(client_id id, std::string const& name, std::function<void(register_result)> done)
{
	auto fail = [&](std::string why) {
		m_node.net().schedule(milliseconds(0), [done, why] { done(register_result{false, 0, why}); });
	};
	client* c = find_client(id);
	if (!c) return fail("no such client");
	if (c->name) return fail("bad request: client already registered as " + *c->name);
	if (name.empty() || name.size() > 256) return fail("bad request: name must be 1..256 bytes");

	auto const peer = peer_identity::from_name(name);
	if (m_by_key.count(peer.key)) return fail("duplicate name on this gateway: " + name);

	c->name = name;
	m_by_key[peer.key] = id;

	// continue any previous registration's seq so this one wins
	resolve(name, [this, id, peer, done, alive = std::weak_ptr<bool>(m_alive)](resolve_result prior) {
		if (alive.expired()) return;
		client* c = find_client(id);
		if (!c || c->name != peer.name) return done(register_result{false, 0, "client went away"});

		presence_record rec;
		rec.peer_key = peer.key;
		rec.peer_name = peer.name;
		rec.gateway = m_node.self();
		rec.seq = prior.record ? prior.record->seq + 1 : 1;
		c->presence_seq = rec.seq;

		m_node.store(peer.key, rec.encode(), m_config.presence_ttl
			, [this, id, peer, done, alive](store_result s) {
				if (alive.expired()) return;
				client* c = find_client(id);
				if (!c || c->name != peer.name) return done(register_result{false, 0, "client went away"});
				if (!s.ok)
				{
					m_by_key.erase(peer.key);
					c->name.reset();
					return done(register_result{false, 0, "no replica acknowledged the presence record"});
				}
				c->registered = true;
				c->refresh_timer = m_node.net().schedule(m_config.presence_refresh, [this, id] { refresh_presence(id); });
				done(register_result{true, s.acks, {}});
			}, false);
	});
}

void gateway::refresh_presence(client_id id)
{
	client* c = find_client(id);
	if (!c || !c->registered || !c->name) return;
	auto const peer = peer_identity::from_name(*c->name);
	presence_record rec;
	rec.peer_key = peer.key;
	rec.peer_name = peer.name;
	rec.gateway = m_node.self();
	rec.seq = c->presence_seq;
	m_node.store(peer.key, rec.encode(), m_config.presence_ttl, {}, false);
	c->refresh_timer = m_node.net().schedule(m_config.presence_refresh, [this, id] { refresh_presence(id); });
}

void gateway::resolve(std::string const& name, std::function<void(resolve_result)> done)
{
	m_node.iterative_find_value(node_id::from_sha1(name)
		, [this, name, done = std::move(done), alive = std::weak_ptr<bool>(m_alive)](value_lookup_result v) {
			if (alive.expired()) return;
			resolve_result r;
			r.rounds = v.rounds;
			if (v.status == value_status::not_joined || v.status == value_status::all_queries_failed)
			{
				r.status = resolve_status::lookup_failed;
				return done(r);
			}
			timestamp const now = m_node.net().now();
			std::vector<presence_record> records;
			for (auto const& e : v.values)
			{
				auto rec = presence_record::decode(e.value, now + seconds(e.ttl_s));
				if (rec && rec->peer_name == name) records.push_back(*rec);
			}
			r.record = newest_presence(records, now);
			r.status = r.record ? resolve_status::found : resolve_status::not_found;
			done(r);
		});
}

std::string gateway::new_session_id()
{
	auto const a = m_node.random().next();
	auto const b = m_node.random().next();
	return node_id::from_uint(a).to_hex().substr(24) + node_id::from_uint(b).to_hex().substr(24);
}

void gateway::connect(client_id id, std::string const& to)
{
	client* c = find_client(id);
	if (!c) return;
	if (!c->registered) return send(id, error_frame("BAD_REQUEST", "register before connecting"));
	if (to == *c->name) return send(id, error_frame("BAD_REQUEST", "cannot connect to yourself"));

	resolve(to, [this, id, to, alive = std::weak_ptr<bool>(m_alive)](resolve_result r) {
		if (alive.expired()) return;
		client* c = find_client(id);
		if (!c || !c->registered) return;
		if (r.status == resolve_status::not_found)
			return send(id, error_frame("PEER_NOT_FOUND", "no presence record for " + to));
		if (r.status == resolve_status::lookup_failed)
			return send(id, error_frame("RELAY_FAILED", "lookup for " + to + " failed"));

		session s;
		s.id = new_session_id();
		s.remote_name = to;
		s.remote_gateway = r.record->gateway;
		s.outbound = true;
		s.resolve_rounds = r.rounds;
		std::string const sid = s.id;
		c->sessions.emplace(sid, std::move(s));
		send(id, session_frame(sid, to));
	});
}

void gateway::on_signal(client_id id, gateway_frame const& f)
{
	client* c = find_client(id);
	if (!c) return;
	if (!c->registered) return send(id, error_frame("BAD_REQUEST", "register before signaling"));
	auto const si = c->sessions.find(*f.session);
	if (si == c->sessions.end()) return send(id, error_frame("BAD_REQUEST", "unknown session " + *f.session));
	session& s = si->second;
	if (*f.seq < 1 || *f.seq <= s.last_sent_seq)
		return send(id, error_frame("BAD_REQUEST", "seq must start at 1 and increase within a session"));

	signal_envelope env;
	env.from_peer = *c->name;
	env.to_peer = s.remote_name;
	env.session_id = s.id;
	env.seq = std::uint64_t(*f.seq);
	env.kind = *signal_kind_from_string(*f.kind);
	env.blob = *f.blob;

	// oversize envelopes are refused here and never relayed
	bool fits = f.blob->size() <= max_envelope_size;
	if (fits)
	{
		try
		{
			rpc_message probe{node_id(), m_node.self(), rpc_kind::signal_relay
				, signal_relay_body{node_id::from_sha1(env.to_peer), env.encode()}};
			(void)encode(probe);
		}
		catch (encode_error const&)
		{
			fits = false;
		}
	}
	if (!fits) return send(id, error_frame("BAD_REQUEST", "envelope exceeds 64 KiB"));

	s.last_sent_seq = *f.seq;
	std::string const sid = s.id;
	bool const bye = env.kind == signal_kind::bye;
	relay(id, sid, std::move(env), true);
	if (bye)
	{
		if (client* again = find_client(id)) drop_session(*again, sid);
	}
}

void gateway::relay(client_id id, std::string const& session_id, signal_envelope env, bool may_reresolve)
{
	client* c = find_client(id);
	if (!c) return;
	auto const si = c->sessions.find(session_id);
	if (si == c->sessions.end()) return;
	peer_info const target = si->second.remote_gateway;
	std::string const remote = si->second.remote_name;

	signal_relay_body body{node_id::from_sha1(env.to_peer), env.encode()};
	auto outcome = [this, id, session_id, env, target, remote, may_reresolve
		, alive = std::weak_ptr<bool>(m_alive)](relay_result r) {
		if (alive.expired() || r == relay_result::ok) return;
		if (r == relay_result::timeout)
			return send(id, error_frame("RELAY_FAILED", "session " + session_id + ": gateway "
				+ target.address.str() + " did not answer"));
		if (!may_reresolve)
			return send(id, error_frame("PEER_NOT_FOUND", "session " + session_id + ": " + remote + " is gone"));

		// the peer left that gateway; look for a newer registration
		resolve(remote, [this, id, session_id, env, target, remote](resolve_result rr) {
			client* c = find_client(id);
			if (!c) return;
			if (rr.status != resolve_status::found || rr.record->gateway.id == target.id)
				return send(id, error_frame("PEER_NOT_FOUND", "session " + session_id + ": " + remote + " is gone"));
			auto si = c->sessions.find(session_id);
			if (si == c->sessions.end())
			{
				// already closed locally (bye); still deliver the last envelope
				session s;
				s.id = session_id;
				s.remote_name = remote;
				s.outbound = true;
				si = c->sessions.emplace(session_id, std::move(s)).first;
			}
			si->second.remote_gateway = rr.record->gateway;
			relay(id, session_id, env, false);
			if (env.kind == signal_kind::bye) drop_session(*c, session_id);
		});
	};

	if (target.id == m_node.id())
	{
		m_node.net().schedule(milliseconds(0), [this, body, target, outcome, alive = std::weak_ptr<bool>(m_alive)] {
			if (alive.expired()) return;
			outcome(relay_signal(target, body) ? relay_result::ok : relay_result::no_such_peer);
		});
		return;
	}
	m_node.send_signal_relay(target, std::move(body), std::move(outcome));
}

bool gateway::relay_signal(peer_info const& from, signal_relay_body const& body)
{
	auto env = signal_envelope::decode(body.envelope);
	if (!env) return false;
	if (node_id::from_sha1(env->to_peer) != body.dest_peer_key) return false;
	auto const k = m_by_key.find(body.dest_peer_key);
	if (k == m_by_key.end()) return false;
	client_id const id = k->second;
	client* c = find_client(id);
	if (!c || !c->registered) return false;

	auto si = c->sessions.find(env->session_id);
	if (si == c->sessions.end())
	{
		session s;
		s.id = env->session_id;
		s.remote_name = env->from_peer;
		s.remote_gateway = from;
		si = c->sessions.emplace(s.id, std::move(s)).first;
		if (!c->link->send_frame(format_frame(session_frame(env->session_id, env->from_peer))))
		{
			c->sessions.erase(si);
			return false;
		}
	}
	else if (!si->second.outbound)
	{
		si->second.remote_gateway = from;
	}
	return deliver(id, si->second, *env);
}

bool gateway::deliver(client_id id, session& s, signal_envelope const& env)
{
	if (env.seq < s.next_expected) return true;  // duplicate from a retried relay
	if (env.seq > s.next_expected)
	{
		s.held.emplace(env.seq, env);
		if (!s.gap_timer)
		{
			std::string const sid = s.id;
			s.gap_timer = m_node.net().schedule(m_config.gap_timeout, [this, id, sid] {
				release_held(id, sid, true);
			});
		}
		return true;
	}

	client* c = find_client(id);
	if (!c) return false;
	if (!c->link->send_frame(format_frame(signal_frame(s.id, env.kind, std::int64_t(env.seq), env.blob))))
		return false;
	s.next_expected = env.seq + 1;
	std::string const sid = s.id;
	if (env.kind == signal_kind::bye)
	{
		drop_session(*c, sid);
		return true;
	}
	release_held(id, sid, false);
	return true;
}

void gateway::release_held(client_id id, std::string const& session_id, bool force)
{
	client* c = find_client(id);
	if (!c) return;
	auto si = c->sessions.find(session_id);
	if (si == c->sessions.end()) return;
	session& s = si->second;
	if (force) s.gap_timer = 0;

	while (!s.held.empty())
	{
		auto first = s.held.begin();
		if (!force && first->first != s.next_expected) break;
		signal_envelope const env = std::move(first->second);
		s.held.erase(first);
		// a forced release skips the gap; the jump in seq shows it
		s.next_expected = env.seq;
		bool const bye = env.kind == signal_kind::bye;
		if (!c->link->send_frame(format_frame(signal_frame(s.id, env.kind, std::int64_t(env.seq), env.blob))))
			return;
		s.next_expected = env.seq + 1;
		if (bye)
		{
			drop_session(*c, session_id);
			return;
		}
	}
	if (s.held.empty() && s.gap_timer)
	{
		m_node.net().cancel(s.gap_timer);
		s.gap_timer = 0;
	}
}

void gateway::drop_session(client& c, std::string const& session_id)
{
	auto const si = c.sessions.find(session_id);
	if (si == c.sessions.end()) return;
	if (si->second.gap_timer) m_node.net().cancel(si->second.gap_timer);
	c.sessions.erase(si);
}

void gateway::drop_client_state(client& c)
{
	if (c.refresh_timer) m_node.net().cancel(c.refresh_timer);
	c.refresh_timer = 0;
	for (auto& [sid, s] : c.sessions)
		if (s.gap_timer) m_node.net().cancel(s.gap_timer);
	c.sessions.clear();
	if (c.name) m_by_key.erase(node_id::from_sha1(*c.name));
	c.name.reset();
	c.registered = false;
}

void gateway::leave(client_id id)
{
	if (client* c = find_client(id)) drop_client_state(*c);
}

void gateway::detach(client_id id)
{
	auto const i = m_clients.find(id);
	if (i == m_clients.end()) return;
	drop_client_state(i->second);
	m_clients.erase(i);
}

std::size_t gateway::session_count() const
{
	std::size_t n = 0;
	for (auto const& [id, c] : m_clients) n += c.sessions.size();
	return n;
}

std::optional<int> gateway::session_resolve_rounds(client_id id, std::string const& session) const
{
	auto const i = m_clients.find(id);
	if (i == m_clients.end()) return std::nullopt;
	auto const s = i->second.sessions.find(session);
	if (s == i->second.sessions.end() || !s->second.outbound) return std::nullopt;
	return s->second.resolve_rounds;
}

std::shared_ptr<loopback_client> loopback_client::open(gateway& gw)
{
	auto c = std::make_shared<loopback_client>(gw);
	c->m_id = gw.attach(c);
	return c;
}

bool loopback_client::send_frame(std::string const& text)
{
	if (m_closed) return false;
	m_raw.push_back(text);
	auto f = parse_server_frame(text);
	if (!f) return true;
	m_received.push_back(*f);
	if (on_frame) on_frame(m_received.back());
	return true;
}

void loopback_client::send_raw(std::string text)
{
	std::weak_ptr<loopback_client> self = shared_from_this();
	m_gateway->dht().net().schedule(milliseconds(0), [self, text = std::move(text)] {
		auto c = self.lock();
		if (!c || c->m_closed) return;
		c->m_gateway->on_frame(c->m_id, text);
	});
}

void loopback_client::close()
{
	if (m_closed) return;
	m_closed = true;
	m_gateway->detach(m_id);
}

} // namespace kadrtc
