"""nlmcert: construction and certification of natural locomotion cycle
families for two conservative nonholonomic locomotors (a two-segment
knife-edge carrier with one passive rotor, and a three-segment serial-joint
extension)."""

__version__ = "0.1.0"
