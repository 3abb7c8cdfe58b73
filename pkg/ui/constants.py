"""Shared constants for UI screens."""

# ASCII art title lines
DVS_TITLE_LINES = [
    "██████╗ ██╗   ██╗███████╗",
    "██╔══██╗██║   ██║██╔════╝",
    "██║  ██║██║   ██║███████╗",
    "██║  ██║╚██╗ ██╔╝╚════██║",
    "██████╔╝ ╚████╔╝ ███████║",
    "╚═════╝   ╚═══╝  ╚══════╝",
]

SUBTITLE = "Adversarial Attacks & Noise Filters\nfor Event-Based Spiking Networks"

# ASCII frame glyphs: empty, OFF, ON, both polarities
FRAME_GLYPHS = {0: "·", 1: "-", 2: "+", 3: "#"}
