"""Reference classifiers for well-known attack traffic patterns.

Each entry pairs a short attack name with a classifier in concrete
syntax using the default feature manifest.  Percentile bounds are left
symbolic; they resolve against whatever training set the classifier is
applied to.
"""
from __future__ import annotations

from typing import Dict

from . import ast
from .parser import parse
from .trace import TraceManifest, default_manifest

CLASSIFIER_TEXTS: Dict[str, str] = {
    "slowloris": (
        "( / _* [ip.src_ip -> [50%,100%]] _* / "
        "( / _* [ip.src_ip -> [50%,100%]] _* / )*sum )sum > 7"
    ),
    "slowhttptest": (
        "( / _* [tcp.ack == 0] _* / "
        "( / _* [ip.src_ip -> [25%,50%]] _* / )*sum )max > 57"
    ),
    "hulk": (
        "( / _* [tcp.seq >= 50%] _* / "
        "( / _* [tcp.fin == 1] _* / )*sum )max > 13"
    ),
    "ssh_patator": (
        "( ( / _* [tcp.psh == 1] _* / )*sum "
        "/ _* [tcp.win <= 50%] _* / )max > 109"
    ),
    "ftp_patator": (
        "( / _* _ / ( / _* [tcp.src_port -> [25%,50%]] _* / )*sum )max > 98"
    ),
    "botnet_ares": (
        "( ( / _* [tcp.fin == 1] _* [tcp.syn == 1] _* "
        "[ip.dst_ip -> [50%,100%]] _* / )*sum "
        "/ _* [ip.len -> [0%,50%]] _* / )sum > 9"
    ),
    "ddos": (
        "( ( / _* [ip.src_ip -> [0%,50%]] _* [tcp.rst == 1] _* / )*sum "
        "/ _* [time_since_last_pkt <= 50%] _* / )sum > 4"
    ),
    "port_scan": "( ( / _* _ / )*max )sum|tcp.dst_port > 9",
}

NOTICE_NAMES: Dict[str, str] = {
    "slowloris": "Slowloris",
    "slowhttptest": "SlowHTTP",
    "hulk": "Hulk",
    "ssh_patator": "SSHPatator",
    "ftp_patator": "FTPPatator",
    "botnet_ares": "BotnetARES",
    "ddos": "DDoS",
    "port_scan": "PortScan",
}


def classifier(name: str, manifest: TraceManifest = None) -> ast.Classifier:
    if manifest is None:
        manifest = default_manifest()
    return parse(CLASSIFIER_TEXTS[name], manifest)


def all_classifiers(manifest: TraceManifest = None) -> Dict[str, ast.Classifier]:
    if manifest is None:
        manifest = default_manifest()
    return {name: parse(text, manifest) for name, text in CLASSIFIER_TEXTS.items()}
