from .cli import meter_profiles

meter_profiles(prog_name="meter_profiles")
