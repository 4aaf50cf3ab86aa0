void bins(int n, int t[const restrict static n], int H[const restrict static n])
{
#pragma pencil reduction (+:H)
  for (int i = 0; i < n; i++)
    H[t[i]] += i;
}
