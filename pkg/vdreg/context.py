from vdreg.exceptions import ConfigError


class Context():
    config = {}
    model_objects = {}
    method_objects = {}

    @classmethod
    def get_model(cls, model_name):
        try:
            return cls.model_objects[model_name]
        except KeyError:
            raise ConfigError('model', 'unknown model "{}", expected one of {}'.format(
                model_name, sorted(cls.model_objects))) from None

    @classmethod
    def get_method(cls, method_name):
        try:
            return cls.method_objects[method_name]
        except KeyError:
            raise ConfigError('methods', 'unknown method "{}", expected one of {}'.format(
                method_name, sorted(cls.method_objects))) from None

    @classmethod
    def get_value(cls, key, default, cast=float):
        raw = cls.config.get(key)
        if raw is None or raw == "":
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError):
            raise ConfigError(key, 'cannot parse value "{}" as {}'.format(
                raw, getattr(cast, '__name__', cast))) from None

    @classmethod
    def get_float(cls, key, default):
        return cls.get_value(key, default, float)

    @classmethod
    def get_int(cls, key, default):
        return cls.get_value(key, default, int)

    @classmethod
    def get_bool(cls, key, default):
        return cls.get_value(key, default, parse_bool)

    @classmethod
    def get_str(cls, key, default):
        return cls.get_value(key, default, str)

    @classmethod
    def get_list(cls, key, default):
        return cls.get_value(key, default, parse_list)


def parse_bool(raw):
    if isinstance(raw, bool):
        return raw
    text = str(raw).strip().lower()
    if text in ('1', 'true', 'yes', 'on'):
        return True
    if text in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError(raw)

def parse_list(raw):
    if isinstance(raw, (list, tuple)):
        return [str(item).strip() for item in raw]
    return [item.strip() for item in str(raw).split(',') if item.strip()]
