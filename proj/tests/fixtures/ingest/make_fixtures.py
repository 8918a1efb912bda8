#!/usr/bin/env python3
"""Regenerates the miniature ingestion fixtures (source totals scaled 1:1000, rounded)."""
import csv
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
COUNTRIES = ["US", "DE", "BR", "JP", "ZA", "FR", "IN", "AU"]
FIRST = 64500


def asrank():
    rows = []
    for i in range(119):
        asn = FIRST + i
        rec = {
            "asn": str(asn),
            "asnName": f"RANK-NET-{asn}",
            "organization": {"orgName": f"Rank Org {asn}", "country": {"iso": COUNTRIES[(i + 1) % 8]}},
            "country": {"iso": COUNTRIES[i % 8]},
            "asnDegree": {"total": 6 + i % 5, "provider": 2, "customer": 1 + i % 3, "peer": 3 + i % 5 - (1 + i % 3) + 1},
            "announcing": {"numberPrefixes": 1 + i % 7, "numberAddresses": 256 * (1 + i % 9)},
            "coneCountries": [COUNTRIES[i % 8], COUNTRIES[(i + 3) % 8]],
        }
        d = rec["asnDegree"]
        d["total"] = d["provider"] + d["customer"] + d["peer"]
        if i < 77:
            rec["cone"] = {"numberAsns": 1 + i, "numberPrefixes": 2 + i, "numberAddresses": 1024 * (1 + i)}
        rows.append(json.dumps(rec, separators=(",", ":")))
    with open(os.path.join(HERE, "asrank.jsonl"), "w") as f:
        f.write("\n".join(rows) + "\n")
    with open(os.path.join(HERE, "asrank_corrupt.jsonl"), "w") as f:
        f.write(rows[0] + "\n")
        f.write('{"asn": "64501", "asnName": \n')
        f.write(rows[2] + "\n")


def peeringdb():
    nets, orgs, facs, netfac, netixlan = [], [], [], [], []
    for k in range(6):
        facs.append({"id": 900 + k, "name": f"Fac {k}", "city": f"City {k}", "country": COUNTRIES[k]})
    for i in range(32):
        asn = FIRST + i
        net = {"id": 100 + i, "asn": asn, "name": f"PDB-NET-{asn}"}
        if i != 31:
            net["org_id"] = 500 + i
            orgs.append({"id": 500 + i, "name": f"PeeringDB Org {asn}", "country": COUNTRIES[(i + 2) % 8]})
        if i < 27 and i != 5:
            net["website"] = f"https://pdb{asn}.example"
        if i == 27:
            net["website"] = f"https://pdb{asn}.example"
        if i < 23:
            net["info_type"] = ["NSP", "Content", "Cable/DSL/ISP", "Enterprise"][i % 4]
        if i < 31:
            net["info_scope"] = ["Regional", "Global", "Europe", "North America"][i % 4]
            net["info_ratio"] = ["Balanced", "Mostly Inbound", "Heavy Outbound"][i % 3]
        net["info_traffic"] = ["1-5Gbps", "10-20Gbps", "100+Gbps"][i % 3]
        nets.append(net)
        if i < 13:
            netfac.append({"id": 700 + i, "net_id": 100 + i, "fac_id": 900 + i % 6})
        if i < 16:
            netixlan.append({"id": 800 + 2 * i, "net_id": 100 + i, "ix_id": 30 + i % 4, "speed": 10000})
            if i == 0:
                netixlan.append({"id": 801, "net_id": 100, "ix_id": 31, "speed": 10000})
    doc = {
        "net": {"data": nets},
        "org": {"data": orgs},
        "fac": {"data": facs},
        "netfac": {"data": netfac},
        "netixlan": {"data": netixlan},
    }
    with open(os.path.join(HERE, "peeringdb.json"), "w") as f:
        json.dump(doc, f, indent=1)


def ipinfo():
    with open(os.path.join(HERE, "ipinfo.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["asn", "name", "domain", "country"])
        for i in range(82):
            asn = FIRST + i
            domain = "" if 1 <= i <= 6 else f"ipinfo{asn}.example"
            w.writerow([f"AS{asn}", f"IPINFO-NET-{asn}", domain, COUNTRIES[(i + 4) % 8]])
        w.writerow(["AS65999", "OUTSIDE-RANK", "outside.example", "US"])
    with open(os.path.join(HERE, "ipinfo_dup.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["asn", "name", "domain", "country"])
        w.writerow(["AS64500", "FIRST-ROW", "first.example", "US"])
        w.writerow(["AS64500", "SECOND-ROW", "second.example", "DE"])


def eyeball():
    with open(os.path.join(HERE, "eyeball.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["asn", "users", "cc"])
        for i in range(31):
            w.writerow([FIRST + i, 1000 * (i + 1), COUNTRIES[i % 8]])


def rdap():
    d = os.path.join(HERE, "rdap")
    os.makedirs(d, exist_ok=True)
    doc = {
        "objectClassName": "autnum",
        "handle": "AS64600",
        "name": "RDAP-NET-64600",
        "country": "NL",
        "entities": [
            {
                "objectClassName": "entity",
                "handle": "ORG-RDAP-1",
                "roles": ["registrant"],
                "vcardArray": ["vcard", [["version", {}, "text", "4.0"], ["fn", {}, "text", "Registry Listed Org"]]],
                "entities": [
                    {
                        "objectClassName": "entity",
                        "roles": ["abuse"],
                        "vcardArray": ["vcard", [["email", {}, "text", "abuse@rdap.example"]]],
                    }
                ],
            }
        ],
    }
    with open(os.path.join(d, "AS64600.json"), "w") as f:
        json.dump(doc, f, indent=1)
    handle_only = {
        "objectClassName": "autnum",
        "handle": "AS64531",
        "entities": [{"objectClassName": "entity", "handle": "ORG-HANDLE-ONLY", "roles": ["registrant"]}],
    }
    with open(os.path.join(d, "AS64531.json"), "w") as f:
        json.dump(handle_only, f, indent=1)


if __name__ == "__main__":
    asrank()
    peeringdb()
    ipinfo()
    eyeball()
    rdap()
