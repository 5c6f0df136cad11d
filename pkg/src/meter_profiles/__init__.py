def get_version_title():
    try:
        from ._version import version
    except ImportError:
        version = "<N/A>"
    return f"meter_profiles ver. {version}"
