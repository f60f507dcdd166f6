int s1[48];
int s2[48];

/* Length of the zero-terminated text in s1, at most `cap`. */
int length(int cap) {
    int n = 0;
    while (n < cap) {
        if (s1[n] == 0)
            break;
        n++;
    }
    return n;
}

/* Index of the first difference between s1 and s2 within `cap`, with
   distinct results for a terminator, a difference, and no difference. */
int compare(int cap) {
    for (int i = 0; i < cap; i++) {
        int c = s1[i];
        int d = s2[i];
        if (c != d)
            return i + 1;
        if (c == 0)
            return 0;
    }
    return -1;
}
