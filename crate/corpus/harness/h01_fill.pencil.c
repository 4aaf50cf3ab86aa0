void fill(int n, int A[const restrict static n])
{
  for (int i = 0; i < n; i++)
    A[i] = 3 * i + 1;
}
