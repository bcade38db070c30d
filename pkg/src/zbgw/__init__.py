"""Smart-building Zigbee-to-MQTT edge gateway, desk scale.

Pairs simulated Zigbee devices via vendor-heterogeneous install-code
credentials, normalizes their attribute reports through data-driven
device definitions, and bridges everything to MQTT with edge-side
store-and-forward buffering.
"""

__version__ = "0.1.0"
