#!/usr/bin/env python

if __name__ == '__main__':
    import sys
    from label_audit.cli import main
    sys.exit(main(sys.argv[1:]))
