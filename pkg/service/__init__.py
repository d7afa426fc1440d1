# HTTP surface of the personal data store
